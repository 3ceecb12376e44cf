#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cadvlm::nn {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. An empty shape is a scalar.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i < 0 ? static_cast<int>(shape_.size()) + i : i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double item() const { return data_.at(0); }
  void reshape(Shape shape);

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Graph node: a value, its lazily allocated gradient, and the closure that
// pushes the gradient to its parents.
struct Node {
  Tensor value;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  std::span<double> ensure_grad();
};

// Handle onto a graph node; cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_->requires_grad; }

  // Empty span until a backward pass has touched this node.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> grad() { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->grad.size(), 0.0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Leaf that never receives gradients.
Var constant(Tensor value);
// Leaf that accumulates gradients (parameters, probe inputs).
Var leaf(Tensor value);

bool grad_enabled();

// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Builds the node for an op result. `fn` is only retained when some parent
// requires gradients and recording is enabled.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn);

// Reverse sweep from a scalar. Gradients accumulate into every reachable
// node that requires them. Throws Errc::GraphMissing for a loss that was not
// produced by a recorded graph and Errc::ShapeMismatch for non-scalars.
void backward(const Var& loss);

}  // namespace cadvlm::nn
