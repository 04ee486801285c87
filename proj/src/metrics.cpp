#include "flowforge/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace flowforge {

namespace {

void check_pair(const FlowFieldf& estimate, const FlowFieldf& truth, const std::optional<Gridf>& mask) {
  if (estimate.height() != truth.height() || estimate.width() != truth.width()) {
    throw Error(ErrorCode::DimMismatch, "estimate and truth must share dimensions");
  }
  if (mask && (mask->height() != truth.height() || mask->width() != truth.width() || mask->channels() != 1)) {
    throw Error(ErrorCode::DimMismatch, "mask must be single-channel with the flow's dimensions");
  }
}

double endpoint_error(const FlowFieldf& a, const FlowFieldf& b, int y, int x) {
  const double du = static_cast<double>(a.u(y, x)) - b.u(y, x);
  const double dv = static_cast<double>(a.v(y, x)) - b.v(y, x);
  return std::sqrt(du * du + dv * dv);
}

bool selected(const std::optional<Gridf>& mask, int y, int x) { return !mask || (*mask)(y, x) != 0.0f; }

template <typename PerPixel>
double masked_mean(const FlowFieldf& estimate, const FlowFieldf& truth, const std::optional<Gridf>& mask,
                   PerPixel&& per_pixel) {
  check_pair(estimate, truth, mask);
  double sum = 0.0;
  std::int64_t n = 0;
  for (int y = 0; y < truth.height(); ++y) {
    for (int x = 0; x < truth.width(); ++x) {
      if (!selected(mask, y, x)) continue;
      sum += per_pixel(y, x);
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptyMask, "mask selects no pixels");
  return sum / static_cast<double>(n);
}

std::size_t bin_of(double value, std::span<const double> edges) {
  const auto it = std::upper_bound(edges.begin(), edges.end(), value);
  const auto idx = static_cast<std::ptrdiff_t>(it - edges.begin()) - 1;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(edges.size()) - 2));
}

Histogram histogram_impl(std::span<const FlowFieldf> flows, std::span<const double> bin_edges, bool nonzero_only) {
  if (flows.empty()) throw Error(ErrorCode::BadBins, "histogram needs at least one flow field");
  if (bin_edges.size() < 2 || !std::is_sorted(bin_edges.begin(), bin_edges.end()) ||
      std::adjacent_find(bin_edges.begin(), bin_edges.end()) != bin_edges.end()) {
    throw Error(ErrorCode::BadBins, "bin edges must be strictly ascending with at least two entries");
  }
  Histogram h;
  h.bin_edges.assign(bin_edges.begin(), bin_edges.end());
  h.counts.assign(bin_edges.size() - 1, 0);
  for (const auto& f : flows) {
    for (int y = 0; y < f.height(); ++y) {
      for (int x = 0; x < f.width(); ++x) {
        const double u = f.u(y, x);
        const double v = f.v(y, x);
        const double mag = std::sqrt(u * u + v * v);
        if (nonzero_only && mag == 0.0) continue;
        ++h.counts[bin_of(mag, bin_edges)];
        ++h.total;
      }
    }
  }
  return h;
}

}  // namespace

double epe(const FlowFieldf& estimate, const FlowFieldf& truth, const std::optional<Gridf>& mask) {
  return masked_mean(estimate, truth, mask, [&](int y, int x) { return endpoint_error(estimate, truth, y, x); });
}

double fl_all(const FlowFieldf& estimate, const FlowFieldf& truth, const std::optional<Gridf>& mask) {
  return masked_mean(estimate, truth, mask, [&](int y, int x) {
    const double err = endpoint_error(estimate, truth, y, x);
    const double u = truth.u(y, x);
    const double v = truth.v(y, x);
    const double mag = std::sqrt(u * u + v * v);
    return (err >= 3.0 && err >= 0.05 * mag) ? 1.0 : 0.0;
  });
}

Histogram displacement_histogram(std::span<const FlowFieldf> flows, std::span<const double> bin_edges) {
  return histogram_impl(flows, bin_edges, false);
}

Histogram nonzero_displacement_histogram(std::span<const FlowFieldf> flows, std::span<const double> bin_edges) {
  return histogram_impl(flows, bin_edges, true);
}

}  // namespace flowforge
