#ifndef FLOWFORGE_LOSS_HPP
#define FLOWFORGE_LOSS_HPP

#include <cmath>
#include <map>
#include <string>

#include "flowforge/graph.hpp"
#include "flowforge/ops.hpp"
#include "flowforge/resample.hpp"

namespace flowforge {

/// Weighted sum over prediction scales of mean(EPE^exponent).
struct LossSpec {
  std::map<std::string, double> scale_weights;
  double error_exponent = 1.0;
  double epsilon = 1e-8;

  void validate() const {
    bool any = false;
    for (const auto& [name, w] : scale_weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::BadParams, "loss weight for " + name + " must be >= 0");
      any = any || w > 0.0;
    }
    if (!any) throw Error(ErrorCode::BadParams, "loss needs at least one positive scale weight");
    if (!(error_exponent > 0.0 && error_exponent <= 1.0)) {
      throw Error(ErrorCode::BadParams, "error exponent must lie in (0,1]");
    }
    if (error_exponent < 1.0 && !(epsilon > 0.0)) throw Error(ErrorCode::BadParams, "epsilon must be positive");
  }

  /// Weight 1 for each named scale.
  static LossSpec uniform(std::initializer_list<std::string> names, double exponent = 1.0) {
    LossSpec s;
    for (const auto& n : names) s.scale_weights[n] = 1.0;
    s.error_exponent = exponent;
    return s;
  }
};

/// mean_pixels(||pred - target||^alpha) for a batch; target is a constant.
/// The derivative of e^alpha is alpha * (e + epsilon)^(alpha - 1).
template <typename Scalar>
Var mean_epe_power(Graph<Scalar>& g, Var pred, const Tensor<Scalar>& target, double alpha, double epsilon) {
  const Shape s = g.value(pred).shape();
  if (s.c != 2 || !(target.shape() == s)) {
    throw Error(ErrorCode::ShapeMismatch, "loss prediction " + to_string(s) + " vs target " + to_string(target.shape()));
  }
  const Eigen::Index pixels = static_cast<Eigen::Index>(s.n) * s.h * s.w;
  const auto& p = g.value(pred).data();
  const auto& t = target.data();
  double total = 0.0;
  for (Eigen::Index i = 0; i < pixels; ++i) {
    const double du = static_cast<double>(p[2 * i]) - t[2 * i];
    const double dv = static_cast<double>(p[2 * i + 1]) - t[2 * i + 1];
    const double e = std::sqrt(du * du + dv * dv);
    total += alpha == 1.0 ? e : std::pow(e, alpha);
  }
  Tensor<Scalar> out({1, 1, 1, 1});
  out.data()[0] = static_cast<Scalar>(total / static_cast<double>(pixels));
  return g.record(std::move(out), {pred}, [=](Graph<Scalar>& gr, Var self) {
    const double up = static_cast<double>(gr.grad_buffer(self).data()[0]) / static_cast<double>(pixels);
    const auto& pv = gr.value(pred).data();
    auto& gp = gr.grad_buffer(pred).data();
    for (Eigen::Index i = 0; i < pixels; ++i) {
      const double du = static_cast<double>(pv[2 * i]) - target.data()[2 * i];
      const double dv = static_cast<double>(pv[2 * i + 1]) - target.data()[2 * i + 1];
      const double e = std::sqrt(du * du + dv * dv);
      const double dpow = alpha == 1.0 ? 1.0 : alpha * std::pow(e + epsilon, alpha - 1.0);
      const double k = up * dpow / (e + epsilon);
      gp[2 * i] += static_cast<Scalar>(k * du);
      gp[2 * i + 1] += static_cast<Scalar>(k * dv);
    }
  });
}

/// Multiscale endpoint-error loss. Each weighted prediction is compared with
/// the truth box-averaged to its resolution. Returns a scalar node.
template <typename Scalar>
Var multiscale_epe_loss(Graph<Scalar>& g, const std::map<std::string, Var>& predictions, const Tensor<Scalar>& truth,
                        const LossSpec& spec) {
  spec.validate();
  if (truth.c() != 2) throw Error(ErrorCode::ShapeMismatch, "truth must have 2 channels");
  std::vector<Var> terms;
  for (const auto& [name, weight] : spec.scale_weights) {
    if (weight == 0.0) continue;
    const auto it = predictions.find(name);
    if (it == predictions.end()) throw Error(ErrorCode::MissingScale, "no prediction named " + name);
    const Shape ps = g.value(it->second).shape();
    if (ps.n != truth.n()) throw Error(ErrorCode::ShapeMismatch, "prediction/truth batch sizes differ");
    Tensor<Scalar> target({ps.n, ps.h, ps.w, 2});
    for (int n = 0; n < ps.n; ++n) target.set_item(n, downsample_to(truth.item(n), ps.h, ps.w));
    Var term = mean_epe_power(g, it->second, target, spec.error_exponent, spec.epsilon);
    if (weight != 1.0) {
      term = scale(g, term, static_cast<Scalar>(weight));
    }
    terms.push_back(term);
  }
  return sum_scalars(g, std::span<const Var>(terms));
}

}  // namespace flowforge

#endif  // FLOWFORGE_LOSS_HPP
