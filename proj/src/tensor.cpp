#include "gsa/tensor.hpp"

#include <cstring>
#include <sstream>

#include "gsa/error.hpp"

namespace gsa {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
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
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) {
      throw DimensionError("tensor dimensions must be positive, got " +
                           shape_to_string(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, bool requires_grad) {
  check_shape(shape);
  impl_ = std::make_shared<Impl>();
  impl_->data.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<real> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("tensor of shape " + shape_to_string(shape) +
                         " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  for (auto& v : t.values()) v = value;
  return t;
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

Tensor::Impl& Tensor::impl() {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

std::span<real> Tensor::values() { return impl().data; }
std::span<const real> Tensor::values() const { return impl().data; }

real Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on a tensor of shape " +
                        shape_to_string(shape()));
  }
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
void Tensor::set_requires_grad(bool on) { impl().requires_grad = on; }

bool Tensor::has_grad() const { return !impl().grad.empty(); }
std::span<real> Tensor::grad() { return impl().grad; }
std::span<const real> Tensor::grad() const { return impl().grad; }

std::vector<real> Tensor::grad_or_zero() const {
  if (has_grad()) return impl().grad;
  return std::vector<real>(numel(), 0.0);
}

std::span<real> Tensor::ensure_grad() {
  auto& g = impl().grad;
  if (g.empty()) g.assign(impl().data.size(), 0.0);
  return g;
}

void Tensor::zero_grad() {
  auto& g = impl().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor(shape(), impl().data, false);
}

Tensor Tensor::reshaped(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape()) +
                         " to " + shape_to_string(new_shape));
  }
  return Tensor(std::move(new_shape), impl().data, false);
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape() != other.shape()) return false;
  return std::memcmp(impl().data.data(), other.impl().data.data(),
                     numel() * sizeof(real)) == 0;
}

}  // namespace gsa
