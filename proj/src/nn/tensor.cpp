#include "cadvlm/nn/tensor.hpp"

#include <unordered_set>

#include "cadvlm/error.hpp"

namespace cadvlm::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != numel(shape_)) {
    throw Error(Errc::ShapeMismatch, "data of length " + std::to_string(data_.size()) +
                                         " for shape " + shape_str(shape_));
  }
}

void Tensor::reshape(Shape shape) {
  if (numel(shape) != data_.size()) {
    throw Error(Errc::ShapeMismatch, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
}

std::span<double> Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var leaf(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    for (const auto& p : parents) {
      if (p.defined() && p.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss.defined() || !loss.requires_grad() ||
      (!loss.node()->backward_fn && loss.node()->parents.empty())) {
    throw Error(Errc::GraphMissing, "loss was not produced by a recorded forward pass");
  }
  if (loss.size() != 1) {
    throw Error(Errc::ShapeMismatch, "backward needs a scalar, got " + shape_str(loss.shape()));
  }

  // Iterative post-order DFS gives a topological order without recursion.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Intermediate grads start from zero on every sweep; leaves accumulate.
  for (Node* n : order) {
    if (!n->parents.empty()) n->grad.assign(n->value.size(), 0.0);
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  // Free intermediate buffers; the graph is single-use.
  for (Node* n : order) {
    if (!n->parents.empty()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

}  // namespace cadvlm::nn
