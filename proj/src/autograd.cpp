#include "dasc/autograd.hpp"

#include <unordered_set>

#include "dasc/error.hpp"

namespace dasc::ad {
namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor::zeros_like(value);
  if (grad.shape() != value.shape()) grad = Tensor::zeros_like(value);
  return grad;
}

void Node::accumulate(const Tensor& g) {
  if (g.shape() != value.shape()) {
    throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match value shape " +
                     shape_str(value.shape()));
  }
  if (grad.empty() || grad.shape() != value.shape()) {
    grad = g;
    return;
  }
  double* dst = grad.data();
  const double* src = g.data();
  const std::size_t n = g.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

double Var::item() const {
  if (node_->value.size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
  return node_->value[0];
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var detach(const Var& v) { return constant(v.value()); }

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (!g_grad_enabled) return Var(std::move(n));
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return Var(std::move(n));
  n->requires_grad = true;
  n->inputs.reserve(inputs.size());
  for (auto& in : inputs) n->inputs.push_back(in.node());
  n->backward = std::move(backward_fn);
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (!root.defined() || root.value().size() != 1) throw ShapeError("backward() requires a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Tensor(root.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    node->backward(*node);
    // Interior gradients are no longer needed once propagated.
    if (!node->inputs.empty()) node->grad = Tensor();
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace dasc::ad
