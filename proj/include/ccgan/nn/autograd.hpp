#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ccgan/nn/tensor.hpp"

namespace ccgan::nn {

// Reverse-mode tape. Every op result holds its inputs and a closure that
// pushes its own gradient into theirs. The graph lives as long as the
// result handle does; parameters are leaves that outlive many graphs.

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad = Tensor<T>(); }
  bool defined() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Leaf that never receives a gradient.
template <class T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return Var<T>(std::move(n));
}

/// Trainable leaf.
template <class T>
Var<T> parameter(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var<T>(std::move(n));
}

/// Same value, cut from the graph.
template <class T>
Var<T> detach(const Var<T>& v) {
  return constant(v.value());
}

/// While alive on this thread, ops record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op result; records inputs and backward only when some input
/// needs a gradient and recording is enabled.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> inputs,
                   std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
  }
  return Var<T>(std::move(n));
}

/// Seeds d(root)/d(root) = 1 for a one-element root and propagates to every
/// reachable node that requires a gradient. Leaf gradients accumulate.
template <class T>
void backward(const Var<T>& root);

extern template void backward<float>(const Var<float>&);
extern template void backward<double>(const Var<double>&);

}  // namespace ccgan::nn
