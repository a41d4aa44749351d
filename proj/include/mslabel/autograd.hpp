#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "mslabel/tensor.hpp"

namespace mslabel {

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor<Scalar>& ensure_grad() {
    if (!grad.same_shape(value)) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
  Node& parent(std::size_t i) { return *parents[i]; }
};

/// Handle to a value in the recorded computation graph.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false)
      : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<Scalar>> node) : node_(std::move(node)) {}

  const Tensor<Scalar>& value() const { return node_->value; }
  const Tensor<Scalar>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::shared_ptr<Node<Scalar>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

namespace detail {
inline thread_local bool grad_mode = true;
}

inline bool grad_enabled() { return detail::grad_mode; }

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Wraps an op result; records parents and the backward closure only when
/// some input needs a gradient.
template <typename Scalar>
Var<Scalar> record(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                   std::function<void(Node<Scalar>&)> backward) {
  Var<Scalar> out(std::move(value));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (auto& in : inputs) node.parents.push_back(in.node());
  node.backward = std::move(backward);
  return out;
}

/// Reverse-mode sweep from a scalar. Gradients accumulate into every leaf
/// that requires them; the intermediate graph is released afterwards.
template <typename Scalar>
void backward(const Var<Scalar>& loss) {
  require(loss.node() != nullptr, ErrorCategory::state, "backward on an empty variable");
  require(loss.value().size() == 1, ErrorCategory::shape, "backward needs a scalar loss");
  require(loss.requires_grad(), ErrorCategory::state,
          "backward called without a recorded forward pass");

  // `order` owns every node of the sweep: releasing a child's parent list
  // must not free parents that are still waiting for their turn.
  using NodePtr = std::shared_ptr<Node<Scalar>>;
  std::vector<NodePtr> order;
  std::unordered_set<const Node<Scalar>*> visited;
  std::vector<std::pair<NodePtr, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodePtr p = node->parents[next++];
      if (p->requires_grad && visited.insert(p.get()).second) stack.push_back({std::move(p), 0});
    } else {
      order.push_back(std::move(node));
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad().array().setOnes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>& node = **it;
    if (node.backward) {
      node.ensure_grad();
      node.backward(node);
      node.backward = nullptr;
      node.parents.clear();
      if (&node != loss.node().get()) node.grad = Tensor<Scalar>();
    }
    it->reset();
  }
}

/// Trainable tensor with an accumulated gradient.
template <typename Scalar>
class Parameter {
 public:
  Parameter() : var_(Tensor<Scalar>(), true) {}
  explicit Parameter(Tensor<Scalar> value) : var_(std::move(value), true) {
    var_.node()->ensure_grad();
  }
  Parameter(const Parameter& other) : Parameter(other.value()) {}
  Parameter& operator=(const Parameter& other) {
    if (this != &other) *this = Parameter(other.value());
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  Tensor<Scalar>& value() { return var_.node()->value; }
  const Tensor<Scalar>& value() const { return var_.node()->value; }
  Tensor<Scalar>& grad() { return var_.node()->ensure_grad(); }
  const Tensor<Scalar>& grad() const { return var_.node()->grad; }
  void zero_grad() { grad().array().setZero(); }
  const Var<Scalar>& var() const { return var_; }

 private:
  Var<Scalar> var_;
};

}  // namespace mslabel
