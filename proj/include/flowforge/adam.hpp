#ifndef FLOWFORGE_ADAM_HPP
#define FLOWFORGE_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "flowforge/parameters.hpp"

namespace flowforge {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments and step counts, one entry per parameter.
template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;
  std::vector<std::int64_t> steps;

  explicit AdamState(const ParameterSet<Scalar>& params) {
    for (const auto& p : params) {
      m.emplace_back(p.value.shape());
      v.emplace_back(p.value.shape());
      steps.push_back(0);
    }
  }
};

/// One bias-corrected Adam update of params[i] for every i with active[i]
/// (all when `active` is empty). Parameters not updated keep their moments.
template <typename Scalar>
void adam_step(ParameterSet<Scalar>& params, const GradientSet<Scalar>& grads, AdamState<Scalar>& state, double lr,
               const AdamConfig& cfg = {}, const std::vector<bool>& active = {}) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "adam: parameter/gradient/state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active.empty() && !active[i]) continue;
    auto& value = params[i].value.data();
    const auto& g = grads[i].data();
    if (g.size() != value.size()) throw Error(ErrorCode::ShapeMismatch, "adam: gradient shape mismatch for " + params[i].name);
    auto& m = state.m[i].data();
    auto& v = state.v[i].data();
    const std::int64_t t = ++state.steps[i];
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const double gk = g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<Scalar>(mk);
      v[k] = static_cast<Scalar>(vk);
      value[k] = static_cast<Scalar>(value[k] - lr * (mk / c1) / (std::sqrt(vk / c2) + cfg.eps));
    }
  }
}

}  // namespace flowforge

#endif  // FLOWFORGE_ADAM_HPP
