#ifndef FLOWFORGE_RANDOM_DATA_HPP
#define FLOWFORGE_RANDOM_DATA_HPP

#include <random>

#include "flowforge/grid.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge::testing {

template <typename Scalar>
Grid<Scalar> random_grid(int h, int w, int c, std::mt19937& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Grid<Scalar> g(h, w, c);
  for (auto& v : g.data()) v = static_cast<Scalar>(d(rng));
  return g;
}

inline FlowFieldf random_flow(int h, int w, std::mt19937& rng, double mag) {
  return FlowFieldf(random_grid<float>(h, w, 2, rng, -mag, mag));
}

template <typename Scalar>
Tensor<Scalar> random_tensor(Shape s, std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<Scalar> t(s);
  for (auto& v : t.data()) v = static_cast<Scalar>(d(rng));
  return t;
}

}  // namespace flowforge::testing

#endif  // FLOWFORGE_RANDOM_DATA_HPP
