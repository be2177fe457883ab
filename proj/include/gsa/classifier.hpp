#pragma once

#include <span>
#include <vector>

#include "gsa/checkpoint.hpp"
#include "gsa/rng.hpp"
#include "gsa/tape.hpp"
#include "gsa/tensor.hpp"

namespace gsa {

struct ClassifierConfig {
  std::size_t channels = 1;
  std::size_t width = 32;
  std::size_t height = 32;
  int num_classes = 2;
  // Output channels per stage; a stage is conv3x3(pad 1) -> ReLU -> 2x2 max-pool.
  std::vector<std::size_t> stages{8, 16};

  // Throws ConfigError when W or H is not divisible by 2^stages.
  void validate() const;
};

// Image CNN: conv stages followed by flatten -> fully connected -> logits.
class ClassifierModel {
 public:
  ClassifierModel() = default;
  static ClassifierModel build(const ClassifierConfig& cfg, Rng& rng);

  // B x C x W x H -> B x L logits.
  Tensor forward(GradientTape& tape, const Tensor& images) const;

  const ClassifierConfig& config() const { return cfg_; }
  std::span<const Tensor> parameters() const { return params_; }
  std::vector<Tensor> parameters_vector() const { return params_; }
  std::size_t parameter_count() const;
  // Spatial extent the head sees after all pooling stages.
  std::size_t head_width() const;
  std::size_t head_height() const;

  Checkpoint to_checkpoint() const;
  static ClassifierModel from_checkpoint(const Checkpoint& ckpt);

 private:
  struct Stage {
    Tensor kernel;
    Tensor bias;
  };
  void collect_parameters();

  ClassifierConfig cfg_;
  std::vector<Stage> stages_;
  Tensor fc_weight_;
  Tensor fc_bias_;
  std::vector<Tensor> params_;
};

// Row-wise argmax, lowest index on ties.
std::vector<int> predict(const Tensor& logits);

// 100 * correct / total. Throws ContractError on length mismatch.
real accuracy(std::span<const int> predictions, std::span<const int> labels);

}  // namespace gsa
