#pragma once

// Joint training of the attention model and the image classifier.
//
// Epochs 1..E update both networks; afterwards the attention model is frozen
// (parameters and optimizer moments untouched) and only the classifier keeps
// learning on the fixed weight map.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gsa/attention.hpp"
#include "gsa/classifier.hpp"
#include "gsa/config.hpp"
#include "gsa/data.hpp"
#include "gsa/tape.hpp"

namespace gsa {

struct EvalProtocol {
  enum class Kind { kSimpleHoldout, kCvEpochSelection };
  Kind kind = Kind::kCvEpochSelection;
  int folds = 5;
  int top_epochs = 5;

  // "simple_holdout" or "cv_epoch_selection(<folds>,<top>)".
  static EvalProtocol parse(const std::string& text);
  std::string to_string() const;
};

struct TrainConfig {
  std::size_t K = 32;
  real lambda = 0.1;
  int E = 15;
  real lr = 1e-3;
  std::size_t batch_size = 32;
  real weight_decay = 1e-4;
  int total_epochs = 60;
  std::uint64_t seed = 0;
  AttentionMode attention_mode = AttentionMode::kPixelCnn;
  EvalProtocol eval_protocol;

  // Pixel CNN architecture.
  std::size_t hidden_kernel = 3;
  std::size_t depth = 2;
  std::size_t last_kernel = 1;
  bool dense_connections = false;
  // Classifier stage widths.
  std::vector<std::size_t> stages{8, 16};

  void validate() const;
  AttentionConfig attention_config() const;
  ClassifierConfig classifier_config(const ImageBatch& like) const;

  // Reads every field by name; unknown keys are errors.
  static TrainConfig from_config(KeyValueConfig& cfg);
  std::vector<std::pair<std::string, std::string>> to_entries() const;
};

struct EpochRecord {
  int epoch = 0;
  real train_loss = 0.0;
  real train_acc = 0.0;
  real test_acc = 0.0;
  real l1_penalty = 0.0;
};

struct MapSnapshot {
  int epoch = 0;
  Tensor map;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<int> selected_epochs;
  real mean_acc = 0.0;
  real std_acc = 0.0;
  // Weight maps after epochs 0, E and total_epochs.
  std::vector<MapSnapshot> snapshots;

  const Tensor& snapshot(int epoch) const;
  // "epoch,train_loss,train_acc,test_acc,l1_penalty" then one row per epoch.
  std::string to_csv() const;
};

struct TrainResult {
  TrainReport report;
  AttentionModel attention;
  ClassifierModel classifier;
};

using EpochObserver = std::function<void(const EpochRecord&, const AttentionModel&,
                                         const ClassifierModel&)>;

struct CostTerms {
  Tensor total;          // cross_entropy + lambda * penalty
  Tensor cross_entropy;  // batch mean
  Tensor penalty;        // mean |map|
  Tensor logits;
};

// Cost of one mini-batch. The weight map comes from `pixels`, the pixel
// representation of the whole training set, so every batch is weighted by the
// same global map.
CostTerms compute_cost(GradientTape& tape, const ImageBatch& batch,
                       const AttentionModel& attention,
                       const ClassifierModel& classifier, const Tensor& pixels,
                       real lambda);
// Same with a precomputed map.
CostTerms compute_cost_with_map(GradientTape& tape, const Tensor& images,
                                std::span<const int> labels, const Tensor& map,
                                const AttentionModel& attention,
                                const ClassifierModel& classifier, real lambda);

// Map without gradient tracking.
Tensor attention_map(const AttentionModel& attention, const Tensor& pixels);

// Predictions for every image of `images` under a fixed map.
std::vector<int> classify(const ClassifierModel& classifier, const Tensor& map,
                          const Tensor& images, std::size_t chunk = 64);

// Shuffled mini-batch order for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

// Throws DivergenceError when the cost stops being finite.
TrainResult train(const ImageBatch& train_set, const ImageBatch& test_set,
                  const TrainConfig& cfg, const EpochObserver& observer = {});

struct EpochSelection {
  std::vector<int> epochs;          // best first
  std::vector<real> mean_val_acc;   // indexed by epoch - 1
};

// folds-fold cross-validation on the training set; epochs ranked by mean
// validation accuracy, ties to the lower epoch.
EpochSelection select_epochs_cv(const ImageBatch& train_set, const TrainConfig& cfg,
                                int folds, int top);

struct AccuracySummary {
  real mean = 0.0;
  real std = 0.0;  // population
};

AccuracySummary summarize_epochs(const TrainReport& report, std::span<const int> epochs);
AccuracySummary evaluate_at_epochs(const ImageBatch& train_set, const ImageBatch& test_set,
                                   const TrainConfig& cfg, std::span<const int> epochs);

// Fills report.selected_epochs / mean_acc / std_acc according to the
// configured protocol. simple_holdout selects the final epoch.
void apply_eval_protocol(TrainReport& report, const ImageBatch& train_set,
                         const TrainConfig& cfg);

struct SweepGrid {
  std::vector<std::size_t> K;
  std::vector<real> lambda;
  std::vector<int> E;

  static SweepGrid from_config(KeyValueConfig& cfg);
  std::size_t cells() const { return K.size() * lambda.size() * E.size(); }
};

struct SweepRow {
  std::size_t K = 0;
  real lambda = 0.0;
  int E = 0;
  AccuracySummary acc;
};

// One train + protocol evaluation per grid cell, K-major order. Cells run on
// up to `jobs` threads; each owns its models.
std::vector<SweepRow> sweep(const ImageBatch& train_set, const ImageBatch& test_set,
                            const TrainConfig& base, const SweepGrid& grid, int jobs = 1);
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace gsa
