#include "gsa/pipeline_check.hpp"

#include <algorithm>
#include <random>

#include "gsa/data.hpp"
#include "gsa/error.hpp"
#include "gsa/rng.hpp"
#include "gsa/training.hpp"

namespace gsa {

void PipelineCheckOptions::validate() const {
  if (width < 3 || height < 3 || width > 16 || height > 16) {
    throw ConfigError("gradcheck size must be between 3x3 and 16x16");
  }
  if (images < 1 || images > 4) throw ConfigError("gradcheck needs 1 to 4 images");
  if (channels < 1 || channels > 3) throw ConfigError("gradcheck needs 1 to 3 channels");
  if (!(h > 0.0)) throw ConfigError("gradcheck step h must be > 0");
  attention.validate();
}

PipelineCheckResult check_pipeline_gradients(const PipelineCheckOptions& opts) {
  opts.validate();
  SyntheticSpec spec;
  spec.N = opts.images;
  spec.C = opts.channels;
  spec.W = opts.width;
  spec.H = opts.height;
  spec.relevant_region = {opts.width / 4 > 0 ? opts.width / 4 : 1,
                          opts.height / 4 > 0 ? opts.height / 4 : 1,
                          opts.width - std::max<std::size_t>(opts.width / 4, 1),
                          opts.height - std::max<std::size_t>(opts.height / 4, 1)};
  spec.num_classes = opts.num_classes;
  spec.seed = opts.seed;
  const ImageBatch batch = generate_synthetic(spec).data;
  const Tensor pixels = build_pixel_representation(batch);

  Rng arng = make_rng(opts.seed, Stream::kAttentionInit);
  const AttentionModel attention =
      AttentionModel::build(opts.attention, batch.size(), batch.channels(), batch.width(),
                            batch.height(), arng);
  ClassifierConfig cc;
  cc.channels = batch.channels();
  cc.width = batch.width();
  cc.height = batch.height();
  cc.num_classes = batch.num_classes;
  cc.stages = opts.stages;
  Rng crng = make_rng(opts.seed, Stream::kClassifierInit);
  const ClassifierModel classifier = ClassifierModel::build(cc, crng);

  // Small random biases so no bias gradient is checked only at its init.
  Rng brng = make_rng(opts.seed, Stream::kGradcheck);
  std::uniform_real_distribution<real> bias_dist(-0.1, 0.1);
  std::vector<std::pair<std::string, Tensor>> params;
  auto add = [&](const std::string& prefix, std::span<const Tensor> ts) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      Tensor t = ts[i];
      if (t.rank() == 1) {
        for (auto& v : t.values()) v = bias_dist(brng);
      }
      params.emplace_back(prefix + "." + std::to_string(i), t);
    }
  };
  add("attention", attention.parameters());
  add("classifier", classifier.parameters());

  struct Probe {
    real value;
    std::uint64_t branches;
  };
  auto cost = [&] {
    GradientTape tape;
    tape.track_branches(true);
    const real v =
        compute_cost(tape, batch, attention, classifier, pixels, opts.lambda).total.item();
    return Probe{v, tape.branch_fingerprint()};
  };

  {
    GradientTape tape;
    if (!opts.fault_op.empty()) tape.inject_fault(opts.fault_op, opts.fault_scale);
    CostTerms c = compute_cost(tape, batch, attention, classifier, pixels, opts.lambda);
    backward(c.total, tape);
  }
  const std::uint64_t base = cost().branches;

  PipelineCheckResult result;
  for (auto& [name, p] : params) {
    const std::vector<real> analytic = p.grad_or_zero();
    std::vector<real> numeric(p.numel());
    ParameterCheck pc;
    pc.name = name;
    pc.size = p.numel();
    auto xv = p.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const real saved = xv[i];
      real h = opts.h;
      for (int tries = 0;; ++tries) {
        xv[i] = saved + h;
        const Probe up = cost();
        xv[i] = saved - h;
        const Probe down = cost();
        xv[i] = saved;
        numeric[i] = (up.value - down.value) / (2.0 * h);
        const bool smooth = up.branches == base && down.branches == base;
        if (smooth || tries == 5) {
          if (tries > 0) ++pc.refined;
          break;
        }
        h /= 10.0;
      }
    }
    pc.cmp = compare_gradients(analytic, numeric, opts.rtol, opts.abs_floor);
    result.max_rel_error = std::max(result.max_rel_error, pc.cmp.max_rel_error);
    result.max_abs_error = std::max(result.max_abs_error, pc.cmp.max_abs_error);
    result.refined += pc.refined;
    result.passed = result.passed && pc.cmp.passed;
    result.parameters.push_back(std::move(pc));
  }
  for (auto& [name, p] : params) p.zero_grad();
  return result;
}

}  // namespace gsa
