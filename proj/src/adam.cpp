#include "gsa/adam.hpp"

#include <cmath>

#include "gsa/error.hpp"

namespace gsa {

void adam_step(std::span<Tensor> params, AdamState& state,
               const AdamOptions& opt, long t) {
  if (t < 1) throw ContractError("adam_step needs t >= 1");
  if (state.m.size() != params.size()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
  }
  const real c1 = 1.0 - std::pow(opt.beta1, static_cast<real>(t));
  const real c2 = 1.0 - std::pow(opt.beta2, static_cast<real>(t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params[p];
    if (!param.has_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(p) +
                          " has no gradient");
    }
    auto w = param.values();
    auto g = param.grad();
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != w.size()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const real gi = g[i] + opt.weight_decay * w[i];
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
      const real mhat = m[i] / c1;
      const real vhat = v[i] / c2;
      w[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

Adam::Adam(std::vector<Tensor> params, AdamOptions opt)
    : params_(std::move(params)), opt_(opt) {
  for (auto& p : params_) p.ensure_grad();
}

void Adam::step() {
  ++t_;
  adam_step(params_, state_, opt_, t_);
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace gsa
