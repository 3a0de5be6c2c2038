#include "nepadd/tensor.hpp"

#include <sstream>

#include "nepadd/errors.hpp"

namespace nepadd {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  check_shape(shape);
  node_ = std::make_shared<TensorNode>();
  node_->value.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
  set_requires_grad(requires_grad);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(v));
}

Tensor Tensor::eye(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  const auto& s = node_->shape;
  if (s.size() == 2) return s[0];
  return 1;
}

std::size_t Tensor::cols() const {
  const auto& s = node_->shape;
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  return 1;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

std::span<const double> Tensor::grad() const {
  if (node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

std::span<double> Tensor::grad_mut() {
  if (node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on && node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t(node_->shape, node_->value, node_->requires_grad);
  t.node_->frozen = node_->frozen;
  return t;
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value, false); }

}  // namespace nepadd
