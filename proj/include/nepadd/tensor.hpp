#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nepadd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Storage shared between Tensor handles. `pass` is the adjoint buffer of the
// backward pass in flight; `grad` is what callers see afterwards.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> pass;
  bool requires_grad = false;
  bool frozen = false;
  bool leaf = true;

  // True when backward() should propagate into this node.
  bool tracks() const { return requires_grad && !frozen; }
};

// Dense row-major f64 array with handle semantics: copying a Tensor shares
// storage. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor eye(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  // Matrix views; rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->value; }
  std::span<double> data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double& operator[](std::size_t i) { return node_->value[i]; }
  double operator()(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return node_->value[r * cols() + c]; }
  double item() const;

  // Gradient accumulator; zeros until a backward pass touches it.
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool frozen() const { return node_->frozen; }
  void set_frozen(bool on) { node_->frozen = on; }
  bool tracks() const { return node_->tracks(); }

  Tensor clone() const;
  // Same values, no gradient tracking.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& shared_node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

}  // namespace nepadd
