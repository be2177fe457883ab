#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gsa {

using real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major array with an optional gradient buffer.
//
// Tensor is a handle: copies share storage, so a parameter captured by a
// model and by a gradient tape refers to the same values. Use clone() for
// an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<real> values, bool requires_grad = false);
  Tensor(Shape shape, std::initializer_list<real> values, bool requires_grad = false)
      : Tensor(std::move(shape), std::vector<real>(values), requires_grad) {}

  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<real> values();
  std::span<const real> values() const;
  real item() const;
  real& operator[](std::size_t i) { return values()[i]; }
  real operator[](std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);

  // An absent gradient reads as all zeros through grad_or_zero().
  bool has_grad() const;
  std::span<real> grad();
  std::span<const real> grad() const;
  std::vector<real> grad_or_zero() const;
  std::span<real> ensure_grad();
  void zero_grad();

  // Same values in fresh storage; no gradient, requires_grad off.
  Tensor clone() const;
  // Same values, relabelled shape, fresh storage.
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const noexcept {
    return impl_ == other.impl_;
  }
  bool bitwise_equal(const Tensor& other) const;

 private:
  struct Impl {
    Shape shape;
    std::vector<real> data;
    std::vector<real> grad;
    bool requires_grad = false;
  };
  const Impl& impl() const;
  Impl& impl();

  std::shared_ptr<Impl> impl_;
};

}  // namespace gsa
