#include "gsa/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gsa/error.hpp"

namespace gsa {

Tensor finite_diff_grad(const std::function<real(const Tensor&)>& f, Tensor& x,
                        real h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad needs h > 0");
  Tensor grad(x.shape());
  auto xv = x.values();
  auto gv = grad.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const real saved = xv[i];
    xv[i] = saved + h;
    const real up = f(x);
    xv[i] = saved - h;
    const real down = f(x);
    xv[i] = saved;
    gv[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

GradComparison compare_gradients(std::span<const real> analytic,
                                 std::span<const real> numeric, real rtol,
                                 real abs_floor) {
  if (analytic.size() != numeric.size()) {
    throw DimensionError("compare_gradients: length mismatch");
  }
  GradComparison r;
  r.compared = analytic.size();
  real worst = -1.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const real a = analytic[i], n = numeric[i];
    const real diff = std::abs(a - n);
    bool ok;
    real score;
    if (std::abs(n) < abs_floor) {
      r.max_abs_error = std::max(r.max_abs_error, diff);
      ok = diff <= abs_floor;
      score = diff / abs_floor * rtol;
    } else {
      const real rel = diff / std::max(std::abs(a), std::abs(n));
      r.max_rel_error = std::max(r.max_rel_error, rel);
      ok = rel <= rtol;
      score = rel;
    }
    if (!std::isfinite(a) || !std::isfinite(n)) {
      ok = false;
      score = INFINITY;
    }
    if (score > worst) {
      worst = score;
      r.worst_index = i;
    }
    if (!ok) r.passed = false;
  }
  return r;
}

}  // namespace gsa
