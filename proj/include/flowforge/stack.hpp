#ifndef FLOWFORGE_STACK_HPP
#define FLOWFORGE_STACK_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flowforge/arch.hpp"
#include "flowforge/checkpoint.hpp"
#include "flowforge/datagen.hpp"
#include "flowforge/loss.hpp"
#include "flowforge/schedule.hpp"

namespace flowforge {

/// One unit of a stack. `warp_link` is meaningful for refinement units only:
/// true feeds (I1, I2, w, warped I2, e), false feeds (I1, I2, w).
struct StackUnit {
  UnitSpec unit;
  bool warp_link = false;
  std::string share_label;  // units with equal non-empty labels share parameters
};

/// Parsed stack description, e.g. "S+W+S@0.125", "SS", "S+W+S#r+W+S#r",
/// "S+W+S|D|F". Branches are separated by '|'; a trailing "F" fuses the
/// last units of the two branches.
struct StackSpec {
  std::string text;
  std::vector<std::vector<StackUnit>> branches;
  std::optional<UnitSpec> fusion;
  int height = 48;
  int width = 64;

  /// All units in evaluation order; the fusion unit, if any, is last.
  std::vector<UnitSpec> units() const;
  std::size_t unit_count() const;
  /// Parameter prefix of unit k ("net<k>/" or "shared_<label>/").
  std::string prefix(std::size_t k) const;
};

/// Grammar: spec := branch ('|' branch)* ('|' 'F' ('@' m)?)?
///          branch := unit (link unit)*;  link := "+W+" | "" ;
///          unit := ('S' | 'D') ('@' m)? ('#' label)?
/// A single '@m' at the very end of the text applies to every unit.
/// 'C' units are rejected: the correlation layer is not implemented.
StackSpec parse_stack_spec(const std::string& text, int height = 48, int width = 64);

/// Adds all stack parameters to a fresh set and initializes them.
template <typename Scalar>
ParameterSet<Scalar> make_stack_parameters(const StackSpec& spec, std::uint64_t seed) {
  ParameterSet<Scalar> params;
  const auto units = spec.units();
  std::set<std::string> added;
  for (std::size_t k = 0; k < units.size(); ++k) {
    const std::string prefix = spec.prefix(k);
    if (!added.insert(prefix).second) continue;
    Network(units[k]).add_parameters(params, prefix);
  }
  init_parameters(params, seed);
  return params;
}

/// Refinement input: concat(I1, I2, w, warp(I2, w), ||warp(I2, w) - I1||)
/// with warping, concat(I1, I2, w) without.
template <typename Scalar>
Var assemble_refinement_input(Graph<Scalar>& g, Var i1, Var i2, Var prev_flow, bool warping, bool warp_grad = true) {
  if (!warping) return concat(g, {i1, i2, prev_flow});
  const Var warped = warp(g, i2, prev_flow, warp_grad);
  const Var err = brightness_error(g, i1, warped, false);
  return concat(g, {i1, i2, prev_flow, warped, err});
}

/// Full-resolution flow from a coarser prediction: nearest-neighbor
/// upsampling without value rescaling, cropped to (h, w).
template <typename Scalar>
Var to_full_resolution(Graph<Scalar>& g, Var flow, int h, int w) {
  const Shape s = g.value(flow).shape();
  const int factor = std::max((h + s.h - 1) / s.h, (w + s.w - 1) / s.w);
  return crop(g, upsample_nn(g, flow, factor), h, w);
}

struct ForwardOptions {
  bool warp_grad = true;
  /// Refinement units predict a correction added to the incoming flow.
  bool residual = true;
  /// Per unit: bind parameters as trainable. Empty means all trainable.
  std::vector<bool> trainable;
};

struct StackOutputs {
  /// Per unit, predictions by name (pr6..pr2, or pr2..pr0 for fusion).
  std::vector<std::map<std::string, Var>> predictions;
  /// Per unit, full-resolution flow.
  std::vector<Var> flows;
  Var final_flow() const { return flows.back(); }
};

/// FusionInputs assembly: (I1, flow_a, flow_b, |flow_a|, |flow_b|, e_a, e_b)
/// with squared brightness errors after warping I2; 11 channels.
template <typename Scalar>
Var assemble_fusion_input(Graph<Scalar>& g, Var i1, Var i2, Var flow_a, Var flow_b) {
  const Shape s = g.value(i1).shape();
  flow_a = to_full_resolution(g, flow_a, s.h, s.w);
  flow_b = to_full_resolution(g, flow_b, s.h, s.w);
  const Var err_a = brightness_error(g, i1, warp(g, i2, flow_a), true);
  const Var err_b = brightness_error(g, i1, warp(g, i2, flow_b), true);
  return concat(g, {i1, flow_a, flow_b, magnitude(g, flow_a), magnitude(g, flow_b), err_a, err_b});
}

/// Runs the fusion network on two branch flows; returns its predictions
/// (pr0 is full resolution).
template <typename Scalar>
std::map<std::string, Var> fuse_branches(Graph<Scalar>& g, const Network& fusion, const ParameterSet<Scalar>& params,
                                         const std::string& prefix, GradientSet<Scalar>* grads, Var i1, Var i2,
                                         Var flow_a, Var flow_b) {
  return fusion.forward(g, params, prefix, grads, assemble_fusion_input(g, i1, i2, flow_a, flow_b));
}

/// Unit 0 of each branch sees (I1, I2); each later unit sees the refinement
/// input built from the previous unit's full-resolution flow.
template <typename Scalar>
StackOutputs forward_stack(Graph<Scalar>& g, const StackSpec& spec, const ParameterSet<Scalar>& params,
                           GradientSet<Scalar>* grads, Var i1, Var i2, const ForwardOptions& opts = {}) {
  const Shape s = g.value(i1).shape();
  if (!(s == g.value(i2).shape()) || s.c != 3) throw Error(ErrorCode::ShapeMismatch, "stack expects two RGB images of equal size");
  if (s.h != spec.height || s.w != spec.width) {
    throw Error(ErrorCode::ShapeMismatch, "images are " + std::to_string(s.w) + "x" + std::to_string(s.h) +
                                              ", stack built for " + std::to_string(spec.width) + "x" +
                                              std::to_string(spec.height));
  }
  auto grads_for = [&](std::size_t k) {
    return opts.trainable.empty() || opts.trainable.at(k) ? grads : nullptr;
  };
  StackOutputs out;
  std::vector<Var> branch_flows;
  std::size_t k = 0;
  for (const auto& branch : spec.branches) {
    Var prev;
    for (std::size_t j = 0; j < branch.size(); ++j, ++k) {
      const Network net(branch[j].unit);
      const Var input = j == 0 ? concat(g, {i1, i2})
                               : assemble_refinement_input(g, i1, i2, prev, branch[j].warp_link, opts.warp_grad);
      auto preds = net.forward(g, params, spec.prefix(k), grads_for(k), input);
      if (j > 0 && opts.residual) {
        for (auto& [name, p] : preds) {
          const Shape ps = g.value(p).shape();
          p = add(g, p, downsample_to(g, prev, ps.h, ps.w));
        }
      }
      prev = to_full_resolution(g, preds.at(net.final_prediction()), s.h, s.w);
      out.predictions.push_back(std::move(preds));
      out.flows.push_back(prev);
    }
    branch_flows.push_back(prev);
  }
  if (spec.fusion) {
    const Network net(*spec.fusion);
    auto preds = fuse_branches(g, net, params, spec.prefix(k), grads_for(k), i1, i2, branch_flows[0], branch_flows[1]);
    out.flows.push_back(to_full_resolution(g, preds.at(net.final_prediction()), s.h, s.w));
    out.predictions.push_back(std::move(preds));
  }
  return out;
}

/// Which units train and how (the stacking option space).
struct TrainPolicy {
  std::vector<bool> trainable;           // per unit; empty = all
  std::vector<bool> intermediate_losses; // per unit; the last unit always has a loss
  bool warp_grad = true;
  bool residual = true;
  /// Trainable units other than the last stay fixed before this iteration.
  /// Unset: two thirds of the total schedule. 0 disables delayed unfreezing.
  std::optional<std::int64_t> freeze_until;
  double error_exponent = 1.0;

  void validate(std::size_t units) const;
};

struct LogRow {
  std::int64_t iter = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_epe = 0.0;
};

struct TrainData {
  std::map<std::string, std::vector<SampleRecord>> train;
  std::vector<SampleRecord> validation;
};

/// Splits records by is_validation_index.
std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> split_validation(std::vector<SampleRecord> records);

struct TrainOptions {
  std::uint64_t seed = 1;
  std::int64_t log_interval = 0;  // 0 = total / 10 (at least 1)
  /// Values copied by name into the fresh parameters before training.
  const ParameterSet<float>* warm_start = nullptr;
  /// Called after each logged row.
  std::function<void(const LogRow&)> on_log;
};

struct TrainResult {
  ParameterSet<float> params;
  std::vector<LogRow> log;
  double final_val_epe = 0.0;
};

TrainResult train_stack(const StackSpec& spec, const TrainPolicy& policy, const CurriculumSpec& curriculum,
                        const TrainData& data, const TrainOptions& options = {});

/// Mean EPE of the stack's final flow over `records` (all pixels).
double evaluate_epe(const StackSpec& spec, const ParameterSet<float>& params, const std::vector<SampleRecord>& records,
                    bool residual = true);

/// Final full-resolution flow for one image pair.
FlowFieldf predict_flow(const StackSpec& spec, const ParameterSet<float>& params, const Gridf& i1, const Gridf& i2,
                        bool residual = true);

/// Worker count: FLOWFORGE_THREADS if set (>= 1), else 1.
int worker_threads();

void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& log);

/// "flowforge-stack <spec>\n" followed by the parameter checkpoint.
Bytes encode_stack_checkpoint(const StackSpec& spec, const ParameterSet<float>& params);
std::pair<StackSpec, ParameterSet<float>> decode_stack_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace flowforge

#endif  // FLOWFORGE_STACK_HPP
