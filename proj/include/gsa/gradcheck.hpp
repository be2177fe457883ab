#pragma once

#include <functional>
#include <span>
#include <string>

#include "gsa/tensor.hpp"

namespace gsa {

// Central-difference gradient of f at x: (f(x + h e_i) - f(x - h e_i)) / 2h.
//
// x is perturbed in place and restored after each probe, so f may either use
// its argument or read x through a model that shares x's storage.
Tensor finite_diff_grad(const std::function<real(const Tensor&)>& f, Tensor& x,
                        real h);

struct GradComparison {
  real max_rel_error = 0.0;  // over elements compared relatively
  real max_abs_error = 0.0;  // over elements compared absolutely
  std::size_t worst_index = 0;
  std::size_t compared = 0;
  bool passed = true;
};

// Elementwise |a - n| / max(|a|, |n|) <= rtol, except where |n| < abs_floor,
// in which case |a - n| <= abs_floor is required instead.
GradComparison compare_gradients(std::span<const real> analytic,
                                 std::span<const real> numeric, real rtol,
                                 real abs_floor);

}  // namespace gsa
