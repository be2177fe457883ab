#include "gsa/tape.hpp"

#include "gsa/error.hpp"

namespace gsa {

bool GradientTape::should_record(
    std::initializer_list<const Tensor*> inputs) const {
  if (!recording()) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

bool GradientTape::should_record(std::span<const Tensor> inputs) const {
  if (!recording()) return false;
  for (const Tensor& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

void GradientTape::record(std::string_view op, std::vector<Tensor> inputs,
                          Tensor output, BackwardFn backward) {
  if (!recording()) return;
  output.set_requires_grad(true);
  entries_.push_back(Entry{std::string(op), std::move(inputs),
                           std::move(output), std::move(backward)});
}

void GradientTape::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a loss that was not produced through "
                        "the tape");
  }
  loss.ensure_grad()[0] = 1.0;
  std::vector<real> scaled;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    Entry& e = *it;
    if (!e.output.has_grad()) continue;
    std::span<const real> grad_out = e.output.grad();
    if (auto f = faults_.find(e.op); f != faults_.end()) {
      scaled.assign(grad_out.begin(), grad_out.end());
      for (auto& g : scaled) g *= f->second;
      grad_out = scaled;
    }
    e.backward(grad_out);
  }
}

void GradientTape::clear() {
  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (in.has_grad()) in.zero_grad();
    }
    if (e.output.has_grad()) e.output.zero_grad();
  }
  entries_.clear();
}

}  // namespace gsa
