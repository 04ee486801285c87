#ifndef FLOWFORGE_ARCH_HPP
#define FLOWFORGE_ARCH_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowforge/graph.hpp"
#include "flowforge/ops.hpp"
#include "flowforge/rng.hpp"

namespace flowforge {

enum class UnitKind { S, SD, Fusion };

std::string to_string(UnitKind kind);

struct UnitSpec {
  UnitKind kind = UnitKind::S;
  double channel_multiplier = 1.0;
  int input_channels = 6;
  int height = 48;
  int width = 64;

  /// Throws BadSpec for an unsupported input channel count or multiplier.
  void validate() const;
};

enum class LayerOp { Conv, Upconv, Predict };

inline constexpr float kLeakySlope = 0.1f;

/// One row of a layer table. `inputs` are layer names or "input"; several
/// inputs are concatenated at the resolution of the last one (the skip
/// connection), smaller ones nearest-neighbor upsampled and cropped to fit.
struct LayerSpec {
  std::string name;
  LayerOp op = LayerOp::Conv;
  int kernel = 3;
  int stride = 1;
  int base_channels = 0;
  std::vector<std::string> inputs;
};

/// Resolved geometry of one layer.
struct LayerTrace {
  std::string name;
  int kernel = 0;
  int stride = 0;
  int in_channels = 0;
  int out_channels = 0;
  int in_height = 0;
  int in_width = 0;
  int out_height = 0;
  int out_width = 0;
  std::vector<std::string> inputs;
};

/// round(multiplier * base), halves up, at least 1.
int scaled_channels(int base, double multiplier);

std::vector<LayerSpec> s_unit_table();
std::vector<LayerSpec> sd_unit_table();
std::vector<LayerSpec> fusion_unit_table();

/// A built unit: its spec and layer table. Parameters live in a
/// ParameterSet under "<prefix><layer>.weight" / ".bias".
class Network {
 public:
  explicit Network(UnitSpec spec);

  const UnitSpec& spec() const { return spec_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  int out_channels(const LayerSpec& layer) const;

  /// Layer geometry for an input of the given size.
  std::vector<LayerTrace> trace(int height, int width) const;

  /// Prediction layer names from coarsest to finest.
  std::vector<std::string> prediction_names() const;
  const std::string& final_prediction() const { return prediction_names_.back(); }

  /// Adds this unit's parameters (zero-valued) to `params`.
  template <typename Scalar>
  void add_parameters(ParameterSet<Scalar>& params, const std::string& prefix) const {
    for (const auto& l : layers_) {
      const int out = out_channels(l);
      const int in = input_channels_of(l);
      if (l.op == LayerOp::Upconv) {
        params.add(prefix + l.name + ".weight", {l.kernel, l.kernel, out, in});
      } else {
        params.add(prefix + l.name + ".weight", {l.kernel, l.kernel, in, out});
      }
      params.add(prefix + l.name + ".bias", {out});
    }
  }

  std::int64_t parameter_count() const;

  /// Runs the unit on `input` (N x H x W x input_channels) and returns every
  /// prediction by name. With non-null `grads` the parameters are trainable.
  template <typename Scalar>
  std::map<std::string, Var> forward(Graph<Scalar>& g, const ParameterSet<Scalar>& params, const std::string& prefix,
                                     GradientSet<Scalar>* grads, Var input) const {
    const Shape in = g.value(input).shape();
    if (in.c != spec_.input_channels) {
      throw Error(ErrorCode::ShapeMismatch, "unit expects " + std::to_string(spec_.input_channels) + " input channels, got " +
                                                std::to_string(in.c));
    }
    std::map<std::string, Var> out{{"input", input}};
    std::map<std::string, Var> predictions;
    for (const auto& l : layers_) {
      std::vector<Var> parts;
      for (const auto& name : l.inputs) parts.push_back(out.at(name));
      Var x = gather(g, parts);
      const Var w = bind(g, params, prefix + l.name + ".weight", grads);
      const Var b = bind(g, params, prefix + l.name + ".bias", grads);
      Var y = l.op == LayerOp::Upconv ? upconv2d(g, x, w, b, l.stride, 1) : conv2d(g, x, w, b, l.stride, l.kernel / 2);
      if (l.op == LayerOp::Predict) {
        predictions[l.name] = y;
      } else {
        y = leaky_relu(g, y, static_cast<Scalar>(kLeakySlope));
      }
      out[l.name] = y;
    }
    return predictions;
  }

 private:
  int input_channels_of(const LayerSpec& layer) const;

  template <typename Scalar>
  static Var bind(Graph<Scalar>& g, const ParameterSet<Scalar>& params, const std::string& name,
                  GradientSet<Scalar>* grads) {
    const auto i = params.find(name);
    if (!i) throw Error(ErrorCode::BadSpec, "missing parameter " + name);
    return g.parameter(params, *i, grads);
  }

  /// Concatenates at the resolution of the last part.
  template <typename Scalar>
  static Var gather(Graph<Scalar>& g, const std::vector<Var>& parts) {
    if (parts.size() == 1) return parts.front();
    const Shape target = g.value(parts.back()).shape();
    std::vector<Var> aligned;
    for (Var p : parts) {
      const Shape s = g.value(p).shape();
      const int factor = std::max(ceil_div(target.h, s.h), ceil_div(target.w, s.w));
      if (factor > 1) p = upsample_nn(g, p, factor);
      aligned.push_back(crop(g, p, target.h, target.w));
    }
    return concat(g, std::span<const Var>(aligned));
  }

  static int ceil_div(int a, int b) { return (a + b - 1) / b; }

  UnitSpec spec_;
  std::vector<LayerSpec> layers_;
  std::map<std::string, int> channels_;
  std::vector<std::string> prediction_names_;
};

/// Fan-in scaled uniform weights (gain for the leaky slope), zero biases.
template <typename Scalar>
void init_parameters(ParameterSet<Scalar>& params, std::uint64_t seed) {
  Rng rng(seed);
  const double gain = std::sqrt(2.0 / (1.0 + double(kLeakySlope) * kLeakySlope));
  for (auto& p : params) {
    if (p.dims.size() != 4) {
      p.value.data().setZero();
      continue;
    }
    // conv (k,k,Cin,Cout): fan-in k*k*Cin; upconv (k,k,Cout,Cin): each output
    // sees about k*k*Cin/4 inputs at stride 2.
    const bool up = p.name.find("upconv") != std::string::npos;
    const double fan_in = up ? p.dims[0] * p.dims[1] * p.dims[3] / 4.0 : double(p.dims[0]) * p.dims[1] * p.dims[2];
    const double bound = gain * std::sqrt(3.0 / std::max(1.0, fan_in));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
}

}  // namespace flowforge

#endif  // FLOWFORGE_ARCH_HPP
