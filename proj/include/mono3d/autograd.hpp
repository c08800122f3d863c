#pragma once

#include "mono3d/planar.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace mono3d {

namespace detail {

template <typename Scalar>
struct Node {
  Planar<Scalar> value;
  Planar<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Adds `g` into this node's gradient, allocating it on first use.
  template <typename Expr>
  void accumulate(const Expr& g) {
    if (!requires_grad) return;
    if (grad.empty())
      grad = Planar<Scalar>(value.channels(), value.height(), value.width(), g);
    else
      grad.matrix() += g;
  }
  /// Zero-initialised gradient buffer for scatter-style backward kernels.
  Planar<Scalar>& grad_buffer() {
    if (grad.empty()) grad = Planar<Scalar>(value.channels(), value.height(), value.width());
    return grad;
  }
};

inline thread_local bool grad_enabled = true;

}  // namespace detail

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : saved_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

/// Handle to a node of a dynamically built reverse-mode graph. Copies share
/// the node. A graph is recorded only when some input requires a gradient, so
/// inference on frozen parameters keeps no history.
template <typename Scalar>
class Var {
 public:
  using NodeT = detail::Node<Scalar>;
  using Matrix = typename Planar<Scalar>::Matrix;

  Var() = default;
  explicit Var(std::shared_ptr<NodeT> node) : node_(std::move(node)) {}

  static Var constant(Planar<Scalar> value) {
    auto n = std::make_shared<NodeT>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var leaf(Planar<Scalar> value) {
    auto n = std::make_shared<NodeT>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Planar<Scalar>& value() const { return node_->value; }
  Planar<Scalar>& mutable_value() { return node_->value; }
  const Planar<Scalar>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Planar<Scalar>(); }
  bool requires_grad() const { return node_->requires_grad; }
  Scalar item() const { return node_->value.matrix()(0, 0); }

  int channels() const { return node_->value.channels(); }
  int height() const { return node_->value.height(); }
  int width() const { return node_->value.width(); }

  NodeT* node() const { return node_.get(); }
  const std::shared_ptr<NodeT>& shared() const { return node_; }

  /// A value-only copy with no history.
  Var detach() const { return constant(node_->value); }

  /// Records a new node. `backward` receives the node after its gradient has
  /// been accumulated and pushes contributions into `node.parents`.
  static Var make(Planar<Scalar> value, std::vector<Var> inputs,
                  std::function<void(NodeT&)> backward) {
    auto n = std::make_shared<NodeT>();
    n->value = std::move(value);
    if (detail::grad_enabled)
      for (const auto& in : inputs)
        if (in.defined() && in.requires_grad()) n->requires_grad = true;
    if (n->requires_grad) {
      n->parents.reserve(inputs.size());
      for (const auto& in : inputs) n->parents.push_back(in.node_);
      n->backward = std::move(backward);
    }
    return Var(std::move(n));
  }

  friend bool operator==(const Var& a, const Var& b) { return a.node_ == b.node_; }

 private:
  std::shared_ptr<NodeT> node_;
};

/// Back-propagates from a scalar root (seed gradient 1) through every node
/// that requires a gradient. Intermediate gradients are released afterwards;
/// leaves keep theirs.
template <typename Scalar>
void backward(const Var<Scalar>& root);

}  // namespace mono3d
