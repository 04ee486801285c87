#ifndef FLOWFORGE_PARAMETERS_HPP
#define FLOWFORGE_PARAMETERS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowforge/tensor.hpp"

namespace flowforge {

/// Named trainable array. `dims` is the logical shape (rank 4 for weights,
/// rank 1 for biases); `value` stores it in a rank-4 Tensor.
template <typename Scalar>
struct Parameter {
  std::string name;
  std::vector<int> dims;
  Tensor<Scalar> value;
};

inline Shape shape_of_dims(const std::vector<int>& dims) {
  Shape s;
  switch (dims.size()) {
    case 1: s = {1, 1, 1, dims[0]}; break;
    case 2: s = {1, 1, dims[0], dims[1]}; break;
    case 3: s = {1, dims[0], dims[1], dims[2]}; break;
    case 4: s = {dims[0], dims[1], dims[2], dims[3]}; break;
    default: throw Error(ErrorCode::ShapeMismatch, "parameter rank must be 1..4");
  }
  for (int d : dims) {
    if (d < 1) throw Error(ErrorCode::ShapeMismatch, "parameter dimensions must be positive");
  }
  return s;
}

/// Ordered collection of uniquely named parameters.
template <typename Scalar>
class ParameterSet {
 public:
  std::size_t add(std::string name, std::vector<int> dims) {
    if (find(name)) throw Error(ErrorCode::ShapeMismatch, "duplicate parameter name '" + name + "'");
    Tensor<Scalar> value(shape_of_dims(dims));
    params_.push_back({std::move(name), std::move(dims), std::move(value)});
    return params_.size() - 1;
  }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<Scalar>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<Scalar>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Total number of scalar weights.
  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& p : params_) {
      const auto i = out.add(p.name, p.dims);
      out[i].value = p.value.template cast<Other>();
    }
    return out;
  }

 private:
  std::vector<Parameter<Scalar>> params_;
};

/// Gradient buffers aligned index-for-index with a ParameterSet.
template <typename Scalar>
using GradientSet = std::vector<Tensor<Scalar>>;

template <typename Scalar>
GradientSet<Scalar> zero_gradients(const ParameterSet<Scalar>& params) {
  GradientSet<Scalar> g;
  g.reserve(params.size());
  for (const auto& p : params) g.emplace_back(p.value.shape());
  return g;
}

/// FNV-1a over names and raw values; detects any bit change.
template <typename Scalar>
std::uint64_t parameter_hash(const ParameterSet<Scalar>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 0x100000001b3ull;
  };
  for (const auto& p : params) {
    feed(p.name.data(), p.name.size());
    feed(p.value.data().data(), sizeof(Scalar) * static_cast<std::size_t>(p.value.size()));
  }
  return h;
}

}  // namespace flowforge

#endif  // FLOWFORGE_PARAMETERS_HPP
