#include "gsa/classifier.hpp"

#include <cmath>
#include <random>

#include "gsa/config.hpp"
#include "gsa/error.hpp"
#include "gsa/ops.hpp"

namespace gsa {

void ClassifierConfig::validate() const {
  if (channels < 1 || width < 1 || height < 1) {
    throw ConfigError("classifier input must be at least 1x1x1");
  }
  if (num_classes < 1) throw ConfigError("classifier needs num_classes >= 1");
  if (stages.empty()) throw ConfigError("classifier needs at least one stage");
  for (auto s : stages) {
    if (s < 1) throw ConfigError("classifier stage widths must be >= 1");
  }
  const std::size_t div = std::size_t{1} << stages.size();
  if (width % div != 0 || height % div != 0) {
    throw ConfigError("classifier input " + std::to_string(width) + "x" +
                      std::to_string(height) + " not divisible by 2^" +
                      std::to_string(stages.size()));
  }
}

ClassifierModel ClassifierModel::build(const ClassifierConfig& cfg, Rng& rng) {
  cfg.validate();
  ClassifierModel m;
  m.cfg_ = cfg;
  auto fill_uniform = [&](Tensor& t, std::size_t fan_in) {
    const real bound = 1.0 / std::sqrt(static_cast<real>(fan_in));
    std::uniform_real_distribution<real> dist(-bound, bound);
    for (auto& w : t.values()) w = dist(rng);
  };
  std::size_t in_ch = cfg.channels;
  for (auto out_ch : cfg.stages) {
    Stage s{Tensor({out_ch, in_ch, 3, 3}, true), Tensor({out_ch}, true)};
    fill_uniform(s.kernel, in_ch * 9);
    m.stages_.push_back(std::move(s));
    in_ch = out_ch;
  }
  const std::size_t features = in_ch * m.head_width() * m.head_height();
  const auto L = static_cast<std::size_t>(cfg.num_classes);
  m.fc_weight_ = Tensor({L, features}, true);
  m.fc_bias_ = Tensor({L}, true);
  fill_uniform(m.fc_weight_, features);
  m.collect_parameters();
  return m;
}

void ClassifierModel::collect_parameters() {
  params_.clear();
  for (const auto& s : stages_) {
    params_.push_back(s.kernel);
    params_.push_back(s.bias);
  }
  params_.push_back(fc_weight_);
  params_.push_back(fc_bias_);
}

std::size_t ClassifierModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

std::size_t ClassifierModel::head_width() const {
  return cfg_.width >> cfg_.stages.size();
}
std::size_t ClassifierModel::head_height() const {
  return cfg_.height >> cfg_.stages.size();
}

Tensor ClassifierModel::forward(GradientTape& tape, const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != cfg_.channels ||
      images.dim(2) != cfg_.width || images.dim(3) != cfg_.height) {
    throw DimensionError("classifier expects B x " + std::to_string(cfg_.channels) +
                         " x " + std::to_string(cfg_.width) + " x " +
                         std::to_string(cfg_.height) + ", got " +
                         shape_to_string(images.shape()));
  }
  Tensor h = images;
  for (const auto& s : stages_) {
    h = conv2d(tape, h, s.kernel, s.bias, 1, 1);
    h = relu(tape, h);
    h = max_pool2d(tape, h, 2);
  }
  const std::size_t B = h.dim(0);
  h = reshape(tape, h, {B, h.numel() / B});
  return linear(tape, h, fc_weight_, fc_bias_);
}

Checkpoint ClassifierModel::to_checkpoint() const {
  std::string stages;
  for (std::size_t i = 0; i < cfg_.stages.size(); ++i) {
    if (i) stages += ',';
    stages += std::to_string(cfg_.stages[i]);
  }
  Checkpoint c;
  c.header = {{"model", "classifier"},
              {"C", std::to_string(cfg_.channels)},
              {"W", std::to_string(cfg_.width)},
              {"H", std::to_string(cfg_.height)},
              {"num_classes", std::to_string(cfg_.num_classes)},
              {"stages", stages}};
  c.tensors = params_;
  return c;
}

ClassifierModel ClassifierModel::from_checkpoint(const Checkpoint& ckpt) {
  auto cfg = KeyValueConfig::parse(format_key_values(ckpt.header), "classifier checkpoint");
  if (cfg.take_string("model") != "classifier") {
    throw FormatError("checkpoint does not hold a classifier");
  }
  ClassifierConfig cc;
  cc.channels = static_cast<std::size_t>(cfg.take_int("C"));
  cc.width = static_cast<std::size_t>(cfg.take_int("W"));
  cc.height = static_cast<std::size_t>(cfg.take_int("H"));
  cc.num_classes = static_cast<int>(cfg.take_int("num_classes"));
  cc.stages.clear();
  for (long s : parse_int_list(cfg.take_string("stages"), "stages")) {
    cc.stages.push_back(static_cast<std::size_t>(s));
  }
  cfg.finish();
  Rng rng(0);
  ClassifierModel m = build(cc, rng);
  if (ckpt.tensors.size() != m.params_.size()) {
    throw FormatError("classifier checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                      " tensors, model needs " + std::to_string(m.params_.size()));
  }
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    if (ckpt.tensors[i].shape() != m.params_[i].shape()) {
      throw FormatError("classifier checkpoint tensor " + std::to_string(i) +
                        " has shape " + shape_to_string(ckpt.tensors[i].shape()));
    }
    auto src = ckpt.tensors[i].values();
    std::copy(src.begin(), src.end(), m.params_[i].values().begin());
  }
  return m;
}

std::vector<int> predict(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("predict expects B x L logits");
  const std::size_t B = logits.dim(0), L = logits.dim(1);
  std::vector<int> out(B);
  auto v = logits.values();
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t best = 0;
    for (std::size_t l = 1; l < L; ++l) {
      if (v[b * L + l] > v[b * L + best]) best = l;
    }
    out[b] = static_cast<int>(best);
  }
  return out;
}

real accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw ContractError("accuracy: " + std::to_string(predictions.size()) +
                        " predictions for " + std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ContractError("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return 100.0 * static_cast<real>(correct) / static_cast<real>(labels.size());
}

}  // namespace gsa
