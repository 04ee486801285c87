#include "flowforge/flow_color.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flowforge {

const std::vector<std::array<int, 3>>& color_wheel() {
  static const std::vector<std::array<int, 3>> wheel = [] {
    // Segment lengths chosen for perceptual spacing: red-yellow, yellow-green,
    // green-cyan, cyan-blue, blue-magenta, magenta-red.
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<std::array<int, 3>> w;
    w.reserve(RY + YG + GC + CB + BM + MR);
    for (int i = 0; i < RY; ++i) w.push_back({255, 255 * i / RY, 0});
    for (int i = 0; i < YG; ++i) w.push_back({255 - 255 * i / YG, 255, 0});
    for (int i = 0; i < GC; ++i) w.push_back({0, 255, 255 * i / GC});
    for (int i = 0; i < CB; ++i) w.push_back({0, 255 - 255 * i / CB, 255});
    for (int i = 0; i < BM; ++i) w.push_back({255 * i / BM, 0, 255});
    for (int i = 0; i < MR; ++i) w.push_back({255, 0, 255 - 255 * i / MR});
    return w;
  }();
  return wheel;
}

Gridf colorize_flow(const FlowFieldf& flow, std::optional<float> max_magnitude) {
  if (max_magnitude && !(*max_magnitude > 0.0f)) {
    throw Error(ErrorCode::BadParams, "max_magnitude must be positive");
  }
  double scale = 1.0;
  if (max_magnitude) {
    scale = *max_magnitude;
  } else {
    const double peak = flow_magnitude(flow).data().maxCoeff();
    scale = peak > 0.0 ? peak : 1.0;
  }

  const auto& wheel = color_wheel();
  const int ncols = static_cast<int>(wheel.size());
  Gridf out(flow.height(), flow.width(), 3);
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      const double u = flow.u(y, x) / scale;
      const double v = flow.v(y, x) / scale;
      const double rad = std::sqrt(u * u + v * v);
      const double angle = std::atan2(-v, -u) / std::numbers::pi;
      const double fk = (angle + 1.0) / 2.0 * (ncols - 1);
      const int k0 = static_cast<int>(std::floor(fk));
      const int k1 = (k0 + 1) % ncols;
      const double f = fk - k0;
      for (int c = 0; c < 3; ++c) {
        const double col0 = wheel[k0][c] / 255.0;
        const double col1 = wheel[k1][c] / 255.0;
        double col = (1.0 - f) * col0 + f * col1;
        if (rad <= 1.0) {
          col = 1.0 - rad * (1.0 - col);
        } else {
          col *= 0.75;
        }
        out(y, x, c) = static_cast<float>(std::clamp(col, 0.0, 1.0));
      }
    }
  }
  return out;
}

}  // namespace flowforge
