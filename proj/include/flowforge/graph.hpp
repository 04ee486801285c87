#ifndef FLOWFORGE_GRAPH_HPP
#define FLOWFORGE_GRAPH_HPP

#include <functional>
#include <initializer_list>
#include <map>
#include <utility>
#include <vector>

#include "flowforge/parameters.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge {

/// Handle to a node in a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
  friend bool operator==(Var, Var) = default;
};

/// Tape for reverse-mode differentiation. Nodes are appended in evaluation
/// order and `backward` walks them in reverse, so evaluation and gradient
/// accumulation order are fixed by construction order.
template <typename Scalar>
class Graph {
 public:
  using TensorT = Tensor<Scalar>;
  using BackwardFn = std::function<void(Graph&, Var self)>;

  Var constant(TensorT value) { return push(std::move(value), false, {}); }

  /// Leaf whose gradient is kept after backward (used by gradient checks).
  Var variable(TensorT value) { return push(std::move(value), true, {}); }

  /// Leaf bound to params[index]. With a non-null `grads`, the node's gradient
  /// is added to (*grads)[index] by backward; otherwise the parameter is
  /// treated as a constant. Repeated binding of the same parameter within one
  /// graph returns the same node, so shared weights sum their gradients.
  Var parameter(const ParameterSet<Scalar>& params, std::size_t index, GradientSet<Scalar>* grads) {
    const auto key = std::make_pair(static_cast<const void*>(&params), index);
    if (auto it = param_cache_.find(key); it != param_cache_.end()) return it->second;
    Var v = push(params[index].value, grads != nullptr, {});
    if (grads) nodes_[v.id].sink = Sink{grads, index};
    param_cache_.emplace(key, v);
    return v;
  }

  /// Records an op result. The node requires a gradient iff any input does;
  /// `fn` is only kept (and later called) in that case.
  Var record(TensorT value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
  }

  Var record(TensorT value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_.at(in.id).requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }

  const TensorT& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad(Var v) const { return nodes_.at(v.id).has_grad; }

  /// Gradient of the last backward root w.r.t. v (zeros if none reached v).
  TensorT grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    return n.has_grad ? n.grad : TensorT(n.value.shape());
  }

  /// Mutable gradient buffer for op implementations; zero-initialized on
  /// first access.
  TensorT& grad_buffer(Var v) {
    auto& n = nodes_.at(v.id);
    if (!n.has_grad) {
      n.grad = TensorT(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 (root must hold one element) and propagates.
  void backward(Var root) {
    if (value(root).size() != 1) throw Error(ErrorCode::ShapeMismatch, "backward root must be a scalar");
    if (!requires_grad(root)) return;
    grad_buffer(root).data().setOnes();
    for (int i = root.id; i >= 0; --i) {
      auto& n = nodes_[i];
      if (!n.requires_grad || !n.has_grad) continue;
      if (n.backward) n.backward(*this, Var{i});
    }
    for (auto& n : nodes_) {
      if (n.sink.grads && n.has_grad) (*n.sink.grads)[n.sink.index].data() += n.grad.data();
    }
  }

 private:
  struct Sink {
    GradientSet<Scalar>* grads = nullptr;
    std::size_t index = 0;
  };
  struct Node {
    TensorT value;
    TensorT grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    Sink sink;
  };

  Var push(TensorT value, bool requires_grad, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::map<std::pair<const void*, std::size_t>, Var> param_cache_;
};

}  // namespace flowforge

#endif  // FLOWFORGE_GRAPH_HPP
