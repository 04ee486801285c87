#ifndef FLOWFORGE_METRICS_HPP
#define FLOWFORGE_METRICS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "flowforge/grid.hpp"

namespace flowforge {

/// Average endpoint error over the pixels selected by `mask` (all pixels when
/// absent). Throws DimMismatch or EmptyMask.
double epe(const FlowFieldf& estimate, const FlowFieldf& truth,
           const std::optional<Gridf>& mask = std::nullopt);

/// Fraction of evaluated pixels whose endpoint error is >= 3 px and >= 5% of
/// the ground-truth magnitude. A zero-magnitude truth pixel is an outlier iff
/// its error is >= 3 px.
double fl_all(const FlowFieldf& estimate, const FlowFieldf& truth,
              const std::optional<Gridf>& mask = std::nullopt);

struct Histogram {
  std::vector<double> bin_edges;
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;
};

/// Histogram of per-pixel displacement magnitudes across `flows`. Magnitudes
/// below the first edge land in the first bin, at or above the last edge in
/// the last bin.
Histogram displacement_histogram(std::span<const FlowFieldf> flows, std::span<const double> bin_edges);

/// As above restricted to pixels with magnitude > 0.
Histogram nonzero_displacement_histogram(std::span<const FlowFieldf> flows,
                                         std::span<const double> bin_edges);

}  // namespace flowforge

#endif  // FLOWFORGE_METRICS_HPP
