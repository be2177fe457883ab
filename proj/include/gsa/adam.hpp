#pragma once

#include <span>
#include <vector>

#include "gsa/tensor.hpp"

namespace gsa {

struct AdamOptions {
  real lr = 1e-3;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
  // Added to the gradient as an L2 term before the moment updates.
  real weight_decay = 0.0;
};

// First and second moment buffers, one pair per parameter tensor.
struct AdamState {
  std::vector<std::vector<real>> m;
  std::vector<std::vector<real>> v;
};

// One bias-corrected Adam update at step t >= 1. Gradients are read but not
// cleared. Throws ContractError if a parameter has no gradient buffer.
void adam_step(std::span<Tensor> params, AdamState& state,
               const AdamOptions& opt, long t);

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor> params, AdamOptions opt);

  void step();
  void zero_grad();

  long steps() const noexcept { return t_; }
  const AdamState& state() const noexcept { return state_; }
  const AdamOptions& options() const noexcept { return opt_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions opt_;
  AdamState state_;
  long t_ = 0;
};

}  // namespace gsa
