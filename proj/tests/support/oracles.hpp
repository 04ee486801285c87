#ifndef FLOWFORGE_TEST_ORACLES_HPP
#define FLOWFORGE_TEST_ORACLES_HPP

#include <array>
#include <cmath>
#include <vector>

#include "flowforge/datagen.hpp"
#include "flowforge/grid.hpp"

namespace flowforge::testing {

// Winding-number point-in-polygon, independent of the generator's crossing test.
inline bool in_polygon(const std::vector<std::array<double, 2>>& v, double x, double y) {
  double angle = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& a = v[i];
    const auto& b = v[(i + 1) % v.size()];
    angle += std::atan2((a[0] - x) * (b[1] - y) - (a[1] - y) * (b[0] - x), (a[0] - x) * (b[0] - x) + (a[1] - y) * (b[1] - y));
  }
  return std::abs(angle) > 3.14159;
}

inline bool oracle_contains(const SceneObject& o, double x, double y) {
  const double dx = x - o.motion.cx, dy = y - o.motion.cy;
  if (o.shape == ShapeKind::Ellipse) {
    const double r = std::hypot(dx, dy);
    const double phi = std::atan2(dy, dx) - o.orientation;
    const double a = r * std::cos(phi) / o.axis_a, b = r * std::sin(phi) / o.axis_b;
    return a * a + b * b <= 1.0 + 1e-9;
  }
  return in_polygon(o.vertices, dx, dy);
}

/// Flow by brute-force rasterization of the known transforms.
inline FlowFieldd oracle_flow(const Scene& s) {
  FlowFieldd f(s.height, s.width);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      for (int k = static_cast<int>(s.objects.size()) - 1; k >= 0; --k) {
        const auto& o = s.objects[k];
        if (!oracle_contains(o, x, y)) continue;
        const auto& m = o.motion;
        const double px = x - m.cx, py = y - m.cy;
        f.u(y, x) = m.cx + m.scale * (std::cos(m.angle) * px - std::sin(m.angle) * py) + m.tx - x;
        f.v(y, x) = m.cy + m.scale * (std::sin(m.angle) * px + std::cos(m.angle) * py) + m.ty - y;
        break;
      }
    }
  }
  return f;
}

inline bool near_edge(const SceneObject& o, double x, double y) {
  // points within 1e-6 of a boundary can legitimately fall either side
  for (double dx : {-1e-6, 1e-6})
    for (double dy : {-1e-6, 1e-6})
      if (oracle_contains(o, x + dx, y + dy) != oracle_contains(o, x, y)) return true;
  return false;
}

/// Largest |emitted - oracle| over pixels not on an object boundary.
inline double oracle_flow_gap(const Scene& s, const FlowFieldf& emitted) {
  const FlowFieldd f = oracle_flow(s);
  double gap = 0.0;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      bool ambiguous = false;
      for (const auto& o : s.objects) ambiguous = ambiguous || near_edge(o, x, y);
      if (ambiguous) continue;
      gap = std::max({gap, std::abs(emitted.u(y, x) - f.u(y, x)), std::abs(emitted.v(y, x) - f.v(y, x))});
    }
  }
  return gap;
}

inline double brute_epe(const FlowFieldf& a, const FlowFieldf& b) {
  double s = 0.0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) s += std::hypot(double(a.u(y, x)) - b.u(y, x), double(a.v(y, x)) - b.v(y, x));
  return s / (a.height() * a.width());
}

inline double brute_fl(const FlowFieldf& a, const FlowFieldf& b) {
  int bad = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      const double err = std::hypot(double(a.u(y, x)) - b.u(y, x), double(a.v(y, x)) - b.v(y, x));
      const double mag = std::hypot(double(b.u(y, x)), double(b.v(y, x)));
      if (err >= 3.0 && err >= 0.05 * mag) ++bad;
    }
  }
  return double(bad) / (a.height() * a.width());
}

}  // namespace flowforge::testing

#endif  // FLOWFORGE_TEST_ORACLES_HPP
