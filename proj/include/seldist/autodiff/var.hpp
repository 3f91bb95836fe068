#pragma once

// Minimal define-by-run reverse-mode differentiation over seldist::Tensor.
//
// A Var is a shared handle to a Node holding a value, an (optional) gradient
// buffer and a closure that pushes the node's gradient into its parents.
// Nodes only record parents when at least one input requires a gradient and
// gradient recording is enabled on the current thread.

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "seldist/core/tensor.hpp"

namespace seldist::ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables gradient recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient accumulated by the last backward pass; zeros when none reached this node.
  Tensor grad() const { return node_->grad.empty() ? Tensor(shape()) : node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor(); }

  Node* get() const { return node_.get(); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Tensor value) { return Var(std::move(value), false); }
inline Var parameter(Tensor value) { return Var(std::move(value), true); }

/// Builds an op result. `backward` is only attached when some input needs a gradient.
inline Var make_result(Tensor value, std::initializer_list<const Var*> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (grad_enabled()) {
    for (const Var* in : inputs) {
      if (in->defined() && in->requires_grad()) node->parents.push_back(in->node());
    }
  }
  if (!node->parents.empty()) {
    node->requires_grad = true;
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

inline Var detach(const Var& v) { return constant(v.value()); }

/// Reverse pass from `root`, seeded with `seed` (ones for a scalar root when omitted).
inline void backward(const Var& root, const Tensor* seed = nullptr) {
  if (!root.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Node* r = root.get();
  if (seed != nullptr) {
    require_same_shape(seed->shape(), r->value.shape(), "backward seed");
    r->ensure_grad() += *seed;
  } else {
    Tensor ones(r->value.shape(), 1.0);
    r->ensure_grad() += ones;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace seldist::ad
