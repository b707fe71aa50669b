#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tcvsr/tensor.hpp"

namespace tcvsr {

/// When enabled every op result is checked for non-finite values. Defaults to
/// the TCVSR_DEBUG_CHECKS environment variable; tests switch it on.
bool debug_checks();
void set_debug_checks(bool on);

/// Tape recording switch for the current thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.shape() != value.shape() || grad.size() != value.size()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a value on the gradient tape. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  /// Leaf values may be edited in place (optimizer updates, finite differences).
  Tensor<T>& mutable_value() {
    if (node_->backward_fn) throw StateError("only leaf variables can be modified in place");
    return node_->value;
  }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rank() const { return node_->value.rank(); }
  std::int64_t dim(int i) const { return node_->value.dim(i); }
  std::int64_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && node_->grad.size() == node_->value.size() && node_->value.size() > 0; }
  const Tensor<T>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor<T>(); }
  std::string_view op() const { return node_->op; }
  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

  /// Reverse-mode sweep from a scalar (single-element) value.
  void backward() const;

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds an op result. The tape link is kept only when grads are enabled and
/// some parent requires grad.
template <typename T>
Var<T> make_op(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& parents,
               std::function<void(Node<T>&)> backward_fn) {
  if (debug_checks() && !value.all_finite()) {
    throw NumericError("non-finite value produced by " + std::string(op));
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  bool any = false;
  if (grad_enabled()) {
    for (const auto& p : parents) any = any || p.requires_grad();
  }
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

/// Adds g into the parent's gradient when the parent participates. Parent
/// slots of undefined optional inputs hold null.
template <typename T>
void accumulate_grad(Node<T>* parent, const Tensor<T>& g) {
  if (!parent || !parent->requires_grad) return;
  auto& dst = parent->ensure_grad();
  T* d = dst.ptr();
  const T* s = g.ptr();
  const std::int64_t n = dst.size();
  for (std::int64_t i = 0; i < n; ++i) d[i] += s[i];
}

template <typename T>
void Var<T>::backward() const {
  if (!node_) throw StateError("backward on an undefined variable");
  if (node_->value.size() != 1) throw ShapeError("backward needs a scalar, got " + shape_str(shape()));
  if (!node_->requires_grad) throw StateError("value does not depend on any differentiable input");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<T>* p = n->parents[i++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward_fn || n->grad.size() == 0) continue;
    n->backward_fn(*n);
    // Interior grads are not needed after propagation.
    n->grad = Tensor<T>();
  }
}

}  // namespace tcvsr
