#pragma once

// Tape-free reverse-mode autodiff: every op result keeps shared pointers to its
// inputs plus a closure that pushes its gradient back into them. Parameters are
// long-lived leaf nodes whose gradients accumulate until cleared.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dasc/tensor.hpp"

namespace dasc::ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient buffer, allocated as zeros on first use.
  Tensor& grad_buffer();
  void accumulate(const Tensor& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  double item() const;

  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

  void zero_grad() const { node_->grad = Tensor(); }
  void set_requires_grad(bool on) const { node_->requires_grad = on; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);
/// Same value, cut from the graph.
Var detach(const Var& v);

/// Builds an op result. When gradients are disabled or no input needs one, the
/// result is a constant and `backward` is dropped.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

/// Runs reverse accumulation from a scalar root (seed gradient 1).
void backward(const Var& root);

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

}  // namespace dasc::ad
