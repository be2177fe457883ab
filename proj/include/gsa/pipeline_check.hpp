#pragma once

// Finite-difference check of every attention and classifier parameter
// through the full cost (pixel CNN -> weighted images -> image CNN ->
// cross-entropy + lambda * mean |map|) on a tiny synthetic instance.

#include <cstdint>
#include <string>
#include <vector>

#include "gsa/attention.hpp"
#include "gsa/gradcheck.hpp"

namespace gsa {

struct PipelineCheckOptions {
  std::size_t width = 8;
  std::size_t height = 8;
  std::size_t images = 2;
  std::size_t channels = 1;
  int num_classes = 2;
  real lambda = 0.1;
  std::uint64_t seed = 0;
  AttentionConfig attention{AttentionMode::kPixelCnn, 4};
  std::vector<std::size_t> stages{4, 4};
  real h = 1e-3;
  real rtol = 1e-3;
  real abs_floor = 1e-6;
  // Negative control: scales the gradient reaching every `fault_op` entry.
  std::string fault_op;
  real fault_scale = 1.0;

  // Tiny sizes only: W, H <= 16 and images <= 4.
  void validate() const;
};

struct ParameterCheck {
  std::string name;
  std::size_t size = 0;
  // Elements whose +-h probe crossed a ReLU or max-pool switch and were
  // re-probed with h / 10, h / 100, ... until both probes stayed on the
  // smooth piece of the unperturbed point.
  std::size_t refined = 0;
  GradComparison cmp;
};

struct PipelineCheckResult {
  std::vector<ParameterCheck> parameters;
  real max_rel_error = 0.0;
  real max_abs_error = 0.0;
  std::size_t refined = 0;
  bool passed = true;
};

PipelineCheckResult check_pipeline_gradients(const PipelineCheckOptions& opts);

}  // namespace gsa
