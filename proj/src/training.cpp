#include "gsa/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "gsa/adam.hpp"
#include "gsa/error.hpp"
#include "gsa/ops.hpp"
#include "gsa/rng.hpp"

namespace gsa {

EvalProtocol EvalProtocol::parse(const std::string& text) {
  EvalProtocol p;
  if (text == "simple_holdout") {
    p.kind = Kind::kSimpleHoldout;
    return p;
  }
  const std::string prefix = "cv_epoch_selection(";
  if (text.rfind(prefix, 0) == 0 && text.back() == ')') {
    const auto args = parse_int_list(
        text.substr(prefix.size(), text.size() - prefix.size() - 1), "eval_protocol");
    if (args.size() == 2) {
      p.kind = Kind::kCvEpochSelection;
      p.folds = static_cast<int>(args[0]);
      p.top_epochs = static_cast<int>(args[1]);
      return p;
    }
  }
  throw ConfigError("eval_protocol must be simple_holdout or cv_epoch_selection(folds,top), got '" +
                    text + "'");
}

std::string EvalProtocol::to_string() const {
  if (kind == Kind::kSimpleHoldout) return "simple_holdout";
  return "cv_epoch_selection(" + std::to_string(folds) + "," + std::to_string(top_epochs) + ")";
}

void TrainConfig::validate() const {
  if (total_epochs < 0) throw ConfigError("total_epochs must be >= 0");
  if (E < 0 || E > total_epochs) throw ConfigError("E must satisfy 0 <= E <= total_epochs");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (eval_protocol.kind == EvalProtocol::Kind::kCvEpochSelection) {
    if (eval_protocol.folds < 2) throw ConfigError("eval_protocol folds must be >= 2");
    if (eval_protocol.top_epochs < 1 || eval_protocol.top_epochs > total_epochs) {
      throw ConfigError("eval_protocol top must be in [1, total_epochs]");
    }
  }
  attention_config().validate();
}

AttentionConfig TrainConfig::attention_config() const {
  AttentionConfig a;
  a.mode = attention_mode;
  a.channels = K;
  a.hidden_kernel = hidden_kernel;
  a.depth = depth;
  a.last_kernel = last_kernel;
  a.dense_connections = dense_connections;
  return a;
}

ClassifierConfig TrainConfig::classifier_config(const ImageBatch& like) const {
  ClassifierConfig c;
  c.channels = like.channels();
  c.width = like.width();
  c.height = like.height();
  c.num_classes = like.num_classes;
  c.stages = stages;
  return c;
}

TrainConfig TrainConfig::from_config(KeyValueConfig& cfg) {
  TrainConfig t;
  auto non_negative = [&](const char* key, long fallback) {
    const long v = cfg.take_int(key, fallback);
    if (v < 0) throw ConfigError(std::string(key) + " must be >= 0");
    return v;
  };
  t.K = static_cast<std::size_t>(non_negative("K", static_cast<long>(t.K)));
  t.lambda = cfg.take_real("lambda", t.lambda);
  t.E = static_cast<int>(non_negative("E", t.E));
  t.lr = cfg.take_real("lr", t.lr);
  t.batch_size = static_cast<std::size_t>(non_negative("batch_size", static_cast<long>(t.batch_size)));
  t.weight_decay = cfg.take_real("weight_decay", t.weight_decay);
  t.total_epochs = static_cast<int>(non_negative("total_epochs", t.total_epochs));
  t.seed = static_cast<std::uint64_t>(non_negative("seed", 0));
  if (auto m = cfg.take("attention_mode")) t.attention_mode = parse_attention_mode(*m);
  if (auto p = cfg.take("eval_protocol")) t.eval_protocol = EvalProtocol::parse(*p);
  t.hidden_kernel = static_cast<std::size_t>(non_negative("hidden_kernel", 3));
  t.depth = static_cast<std::size_t>(non_negative("depth", 2));
  t.last_kernel = static_cast<std::size_t>(non_negative("last_kernel", 1));
  t.dense_connections = cfg.take_bool("dense_connections", false);
  if (auto s = cfg.take("stages")) {
    t.stages.clear();
    for (long v : parse_int_list(*s, "stages")) {
      if (v < 1) throw ConfigError("stages must be positive");
      t.stages.push_back(static_cast<std::size_t>(v));
    }
  }
  cfg.finish();
  t.validate();
  return t;
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_entries() const {
  std::string st;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) st += ',';
    st += std::to_string(stages[i]);
  }
  return {{"K", std::to_string(K)},
          {"lambda", format_real(lambda)},
          {"E", std::to_string(E)},
          {"lr", format_real(lr)},
          {"batch_size", std::to_string(batch_size)},
          {"weight_decay", format_real(weight_decay)},
          {"total_epochs", std::to_string(total_epochs)},
          {"seed", std::to_string(seed)},
          {"attention_mode", to_string(attention_mode)},
          {"eval_protocol", eval_protocol.to_string()},
          {"hidden_kernel", std::to_string(hidden_kernel)},
          {"depth", std::to_string(depth)},
          {"last_kernel", std::to_string(last_kernel)},
          {"dense_connections", dense_connections ? "true" : "false"},
          {"stages", st}};
}

const Tensor& TrainReport::snapshot(int epoch) const {
  for (const auto& s : snapshots) {
    if (s.epoch == epoch) return s.map;
  }
  throw ContractError("no attention snapshot for epoch " + std::to_string(epoch));
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,train_loss,train_acc,test_acc,l1_penalty\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + format_real(e.train_loss) + "," +
           format_real(e.train_acc) + "," + format_real(e.test_acc) + "," +
           format_real(e.l1_penalty) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

CostTerms compute_cost_with_map(GradientTape& tape, const Tensor& images,
                                std::span<const int> labels, const Tensor& map,
                                const AttentionModel& attention,
                                const ClassifierModel& classifier, real lambda) {
  if (images.rank() != 4 || map.rank() != 4 || images.dim(2) != map.dim(2) ||
      images.dim(3) != map.dim(3)) {
    throw ContractError("cost: map " + shape_to_string(map.shape()) +
                        " does not match images " + shape_to_string(images.shape()));
  }
  CostTerms c;
  Tensor weighted = broadcast_mul(tape, images, map);
  c.logits = classifier.forward(tape, weighted);
  c.cross_entropy = softmax_cross_entropy(tape, c.logits, labels);
  c.penalty = attention.penalty(tape, map);
  c.total = add(tape, c.cross_entropy, scale(tape, c.penalty, lambda));
  return c;
}

CostTerms compute_cost(GradientTape& tape, const ImageBatch& batch,
                       const AttentionModel& attention,
                       const ClassifierModel& classifier, const Tensor& pixels,
                       real lambda) {
  if (pixels.rank() != 4 || pixels.dim(2) != batch.width() ||
      pixels.dim(3) != batch.height()) {
    throw ContractError("cost: pixel representation " + shape_to_string(pixels.shape()) +
                        " does not match batch " + shape_to_string(batch.images.shape()));
  }
  Tensor map = attention.forward(tape, pixels);
  return compute_cost_with_map(tape, batch.images, batch.labels, map, attention,
                               classifier, lambda);
}

Tensor attention_map(const AttentionModel& attention, const Tensor& pixels) {
  GradientTape inference(GradientTape::Mode::kInference);
  return attention.forward(inference, pixels).clone();
}

std::vector<int> classify(const ClassifierModel& classifier, const Tensor& map,
                          const Tensor& images, std::size_t chunk) {
  GradientTape inference(GradientTape::Mode::kInference);
  const std::size_t N = images.dim(0);
  const std::size_t per = images.numel() / N;
  std::vector<int> out;
  out.reserve(N);
  for (std::size_t start = 0; start < N; start += chunk) {
    const std::size_t n = std::min(chunk, N - start);
    auto src = images.values().subspan(start * per, n * per);
    Tensor part({n, images.dim(1), images.dim(2), images.dim(3)},
                std::vector<real>(src.begin(), src.end()));
    Tensor logits = classifier.forward(inference, broadcast_mul(inference, part, map));
    auto pred = predict(logits);
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, Stream::kShuffle, static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

namespace {

void check_compatible(const ImageBatch& a, const ImageBatch& b) {
  if (a.channels() != b.channels() || a.width() != b.width() ||
      a.height() != b.height() || a.num_classes != b.num_classes) {
    throw ContractError("train and test sets differ in C, W, H or L");
  }
}

}  // namespace

TrainResult train(const ImageBatch& train_set, const ImageBatch& test_set,
                  const TrainConfig& cfg, const EpochObserver& observer) {
  cfg.validate();
  train_set.validate();
  test_set.validate();
  check_compatible(train_set, test_set);

  const Tensor pixels = build_pixel_representation(train_set);
  TrainResult result;
  {
    Rng rng = make_rng(cfg.seed, Stream::kAttentionInit);
    result.attention = AttentionModel::build(cfg.attention_config(), train_set.size(),
                                             train_set.channels(), train_set.width(),
                                             train_set.height(), rng);
  }
  {
    Rng rng = make_rng(cfg.seed, Stream::kClassifierInit);
    result.classifier = ClassifierModel::build(cfg.classifier_config(train_set), rng);
  }
  const AttentionModel& attention = result.attention;
  const ClassifierModel& classifier = result.classifier;

  AdamOptions f_opt{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  AdamOptions m_opt{cfg.lr, 0.9, 0.999, 1e-8, 0.0};
  Adam classifier_opt(classifier.parameters_vector(), f_opt);
  Adam attention_opt(attention.parameters_vector(), m_opt);
  const bool has_attention_params = !attention.parameters().empty();

  TrainReport& report = result.report;
  Tensor map = attention_map(attention, pixels);
  report.snapshots.push_back({0, map.clone()});
  if (cfg.E == 0 && cfg.total_epochs > 0) report.snapshots.push_back({0, map.clone()});

  const std::size_t N = train_set.size();
  for (int epoch = 1; epoch <= cfg.total_epochs; ++epoch) {
    const bool joint = epoch <= cfg.E;
    const auto order = epoch_order(N, cfg.seed, epoch);
    // After the cut-off the map is a constant input; evaluate it once.
    const Tensor frozen_map = joint ? Tensor() : attention_map(attention, pixels);

    real loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < N; start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, N - start);
      const ImageBatch batch =
          train_set.subset(std::span<const std::size_t>(order).subspan(start, n));
      GradientTape tape;
      CostTerms cost = joint ? compute_cost(tape, batch, attention, classifier, pixels,
                                            cfg.lambda)
                             : compute_cost_with_map(tape, batch.images, batch.labels,
                                                     frozen_map, attention, classifier,
                                                     cfg.lambda);
      const real value = cost.total.item();
      if (!std::isfinite(value)) {
        throw DivergenceError(epoch, "non-finite cost at epoch " + std::to_string(epoch));
      }
      backward(cost.total, tape);
      classifier_opt.step();
      if (joint && has_attention_params) attention_opt.step();
      classifier_opt.zero_grad();
      attention_opt.zero_grad();

      loss_sum += value * static_cast<real>(n);
      const auto pred = predict(cost.logits);
      for (std::size_t i = 0; i < n; ++i) correct += pred[i] == batch.labels[i];
    }

    map = attention_map(attention, pixels);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<real>(N);
    rec.train_acc = 100.0 * static_cast<real>(correct) / static_cast<real>(N);
    rec.test_acc = accuracy(classify(classifier, map, test_set.images), test_set.labels);
    {
      GradientTape inference(GradientTape::Mode::kInference);
      rec.l1_penalty = attention.penalty(inference, map).item();
    }
    if (!std::isfinite(rec.train_loss)) {
      throw DivergenceError(epoch, "non-finite loss at epoch " + std::to_string(epoch));
    }
    report.epochs.push_back(rec);
    if (epoch == cfg.E) report.snapshots.push_back({epoch, map.clone()});
    if (epoch == cfg.total_epochs) report.snapshots.push_back({epoch, map.clone()});
    if (observer) observer(rec, attention, classifier);
  }
  if (!report.epochs.empty()) {
    report.selected_epochs = {cfg.total_epochs};
    report.mean_acc = report.epochs.back().test_acc;
    report.std_acc = 0.0;
  }
  return result;
}

// ---------------------------------------------------------------------------

EpochSelection select_epochs_cv(const ImageBatch& train_set, const TrainConfig& cfg,
                                int folds, int top) {
  cfg.validate();
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (top < 1 || top > cfg.total_epochs) throw ConfigError("top must be in [1, total_epochs]");
  const std::size_t N = train_set.size();
  if (N / static_cast<std::size_t>(folds) < cfg.batch_size) {
    throw ConfigError("fold of " + std::to_string(N / static_cast<std::size_t>(folds)) +
                      " images is smaller than one batch of " +
                      std::to_string(cfg.batch_size));
  }
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  {
    Rng rng = make_rng(cfg.seed, Stream::kFolds);
    std::shuffle(order.begin(), order.end(), rng);
  }
  EpochSelection sel;
  sel.mean_val_acc.assign(static_cast<std::size_t>(cfg.total_epochs), 0.0);
  for (int f = 0; f < folds; ++f) {
    const std::size_t lo = N * static_cast<std::size_t>(f) / static_cast<std::size_t>(folds);
    const std::size_t hi = N * static_cast<std::size_t>(f + 1) / static_cast<std::size_t>(folds);
    std::vector<std::size_t> fit_idx, val_idx;
    for (std::size_t i = 0; i < N; ++i) {
      (i >= lo && i < hi ? val_idx : fit_idx).push_back(order[i]);
    }
    const auto fit = train_set.subset(fit_idx);
    const auto val = train_set.subset(val_idx);
    const auto res = train(fit, val, cfg);
    for (const auto& e : res.report.epochs) {
      sel.mean_val_acc[static_cast<std::size_t>(e.epoch - 1)] += e.test_acc / folds;
    }
  }
  std::vector<int> epochs(static_cast<std::size_t>(cfg.total_epochs));
  std::iota(epochs.begin(), epochs.end(), 1);
  std::stable_sort(epochs.begin(), epochs.end(), [&](int a, int b) {
    return sel.mean_val_acc[static_cast<std::size_t>(a - 1)] >
           sel.mean_val_acc[static_cast<std::size_t>(b - 1)];
  });
  epochs.resize(static_cast<std::size_t>(top));
  sel.epochs = std::move(epochs);
  return sel;
}

AccuracySummary summarize_epochs(const TrainReport& report, std::span<const int> epochs) {
  if (epochs.empty()) throw ContractError("no epochs to summarize");
  std::vector<real> acc;
  for (int e : epochs) {
    if (e < 1 || static_cast<std::size_t>(e) > report.epochs.size()) {
      throw ContractError("epoch " + std::to_string(e) + " outside the training run");
    }
    acc.push_back(report.epochs[static_cast<std::size_t>(e - 1)].test_acc);
  }
  AccuracySummary s;
  for (real a : acc) s.mean += a;
  s.mean /= static_cast<real>(acc.size());
  real var = 0.0;
  for (real a : acc) var += (a - s.mean) * (a - s.mean);
  s.std = std::sqrt(var / static_cast<real>(acc.size()));
  return s;
}

AccuracySummary evaluate_at_epochs(const ImageBatch& train_set, const ImageBatch& test_set,
                                   const TrainConfig& cfg, std::span<const int> epochs) {
  if (epochs.empty()) throw ContractError("evaluate_at_epochs needs at least one epoch");
  for (int e : epochs) {
    if (e < 1 || e > cfg.total_epochs) {
      throw ContractError("epoch " + std::to_string(e) + " outside [1, total_epochs]");
    }
  }
  return summarize_epochs(train(train_set, test_set, cfg).report, epochs);
}

void apply_eval_protocol(TrainReport& report, const ImageBatch& train_set,
                         const TrainConfig& cfg) {
  if (report.epochs.empty()) return;
  if (cfg.eval_protocol.kind == EvalProtocol::Kind::kSimpleHoldout) {
    report.selected_epochs = {static_cast<int>(report.epochs.size())};
  } else {
    report.selected_epochs =
        select_epochs_cv(train_set, cfg, cfg.eval_protocol.folds, cfg.eval_protocol.top_epochs)
            .epochs;
  }
  const auto s = summarize_epochs(report, report.selected_epochs);
  report.mean_acc = s.mean;
  report.std_acc = s.std;
}

// ---------------------------------------------------------------------------

SweepGrid SweepGrid::from_config(KeyValueConfig& cfg) {
  SweepGrid g;
  for (long k : parse_int_list(cfg.take_string("K"), "K")) {
    if (k < 1) throw ConfigError("grid K values must be >= 1");
    g.K.push_back(static_cast<std::size_t>(k));
  }
  g.lambda = parse_real_list(cfg.take_string("lambda"), "lambda");
  for (long e : parse_int_list(cfg.take_string("E"), "E")) {
    if (e < 0) throw ConfigError("grid E values must be >= 0");
    g.E.push_back(static_cast<int>(e));
  }
  cfg.finish();
  if (g.cells() == 0) throw ConfigError("sweep grid has an empty axis");
  return g;
}

std::vector<SweepRow> sweep(const ImageBatch& train_set, const ImageBatch& test_set,
                            const TrainConfig& base, const SweepGrid& grid, int jobs) {
  std::vector<SweepRow> rows;
  for (auto k : grid.K) {
    for (auto l : grid.lambda) {
      for (auto e : grid.E) rows.push_back({k, l, e, {}});
    }
  }
  for (const auto& r : rows) {
    TrainConfig c = base;
    c.K = r.K;
    c.lambda = r.lambda;
    c.E = r.E;
    c.validate();
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      try {
        TrainConfig c = base;
        c.K = rows[i].K;
        c.lambda = rows[i].lambda;
        c.E = rows[i].E;
        auto res = train(train_set, test_set, c);
        apply_eval_protocol(res.report, train_set, c);
        rows[i].acc = {res.report.mean_acc, res.report.std_acc};
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(rows.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "K,lambda,E,mean_acc,std_acc\n";
  for (const auto& r : rows) {
    out += std::to_string(r.K) + "," + format_real(r.lambda) + "," + std::to_string(r.E) +
           "," + format_real(r.acc.mean) + "," + format_real(r.acc.std) + "\n";
  }
  return out;
}

}  // namespace gsa
