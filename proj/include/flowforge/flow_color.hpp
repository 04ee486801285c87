#ifndef FLOWFORGE_FLOW_COLOR_HPP
#define FLOWFORGE_FLOW_COLOR_HPP

#include <array>
#include <optional>
#include <vector>

#include "flowforge/grid.hpp"

namespace flowforge {

/// The 55-entry Middlebury color wheel, RGB in 0..255.
const std::vector<std::array<int, 3>>& color_wheel();

/// Hue encodes direction, saturation encodes magnitude relative to
/// `max_magnitude` (auto: largest magnitude in the field, or 1 for an all-zero
/// field). Zero motion is white. Output is RGB in [0,1].
Gridf colorize_flow(const FlowFieldf& flow, std::optional<float> max_magnitude = std::nullopt);

/// Per-pixel sqrt(u^2 + v^2) as a single-channel grid.
template <typename Scalar>
Grid<Scalar> flow_magnitude(const FlowField<Scalar>& flow) {
  Grid<Scalar> out(flow.height(), flow.width(), 1);
  const auto m = flow.grid().matrix();
  out.data() = m.rowwise().norm().array();
  return out;
}

}  // namespace flowforge

#endif  // FLOWFORGE_FLOW_COLOR_HPP
