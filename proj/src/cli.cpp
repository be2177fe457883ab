#include "gsa/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <set>

#include <CLI11.hpp>

#include "gsa/attention.hpp"
#include "gsa/checkpoint.hpp"
#include "gsa/config.hpp"
#include "gsa/data.hpp"
#include "gsa/error.hpp"
#include "gsa/pipeline_check.hpp"
#include "gsa/serialize.hpp"
#include "gsa/training.hpp"

namespace fs = std::filesystem;

namespace gsa {

namespace {

using Entries = std::vector<std::pair<std::string, std::string>>;

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Run manifest: command line, resolved config, seed, timestamps and one
// path + checksum pair per artifact.
class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args)
      : command_(std::move(command)), started_(utc_now()) {
    for (const auto& a : args) {
      if (!argv_.empty()) argv_ += ' ';
      argv_ += a;
    }
  }

  void config(const Entries& entries) {
    for (const auto& [k, v] : entries) config_.emplace_back("config." + k, v);
  }
  void seed(std::uint64_t s) { seed_ = std::to_string(s); }
  void result(const std::string& key, const std::string& value) {
    results_.emplace_back("result." + key, value);
  }
  void artifact(const fs::path& path) { artifacts_.push_back(path); }

  void write(const fs::path& path) const {
    Entries e{{"command", command_}, {"argv", argv_}};
    if (!seed_.empty()) e.emplace_back("seed", seed_);
    e.emplace_back("started", started_);
    e.emplace_back("finished", utc_now());
    e.insert(e.end(), config_.begin(), config_.end());
    e.insert(e.end(), results_.begin(), results_.end());
    e.emplace_back("artifacts", std::to_string(artifacts_.size()));
    for (std::size_t i = 0; i < artifacts_.size(); ++i) {
      e.emplace_back("artifact." + std::to_string(i) + ".path", artifacts_[i].string());
      e.emplace_back("artifact." + std::to_string(i) + ".fnv1a64",
                     file_checksum(artifacts_[i]));
    }
    write_file(path, format_key_values(e));
  }

 private:
  std::string command_;
  std::string argv_;
  std::string started_;
  std::string seed_;
  Entries config_;
  Entries results_;
  std::vector<fs::path> artifacts_;
};

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw ConfigError("--size must look like WxH, got '" + text + "'");
  const auto w = parse_int_list(text.substr(0, x), "--size");
  const auto h = parse_int_list(text.substr(x + 1), "--size");
  if (w.size() != 1 || h.size() != 1 || w[0] < 1 || h[0] < 1) {
    throw ConfigError("--size must look like WxH with positive sizes, got '" + text + "'");
  }
  return {static_cast<std::size_t>(w[0]), static_cast<std::size_t>(h[0])};
}

std::string join_ints(std::span<const int> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string spec, out;
};

int cmd_gen(const GenArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  auto cfg = KeyValueConfig::load(a.spec);
  const SyntheticSpec spec = SyntheticSpec::from_config(cfg);
  Manifest m("gen", args);
  m.config(spec.to_entries());
  m.seed(spec.seed);

  const auto ds = generate_synthetic(spec);
  const auto [train_set, test_set] = split_train_test(ds.data, 0.8, spec.seed);
  const fs::path dir(a.out);
  make_dir(dir);
  save_dataset(train_set, dir, "train");
  save_dataset(test_set, dir, "test");
  write_dataset_info(dir, ds.data.num_classes);
  save_tensor(ds.mask, dir / "mask.gten");
  for (const char* f : {"train.gten", "train_labels.csv", "test.gten", "test_labels.csv",
                        "dataset.txt", "mask.gten"}) {
    m.artifact(dir / f);
  }
  m.result("train_images", std::to_string(train_set.size()));
  m.result("test_images", std::to_string(test_set.size()));
  m.write(dir / "manifest.txt");
  out << "generated " << train_set.size() << " train + " << test_set.size()
      << " test images in " << dir.string() << "\n";
  return kExitOk;
}

struct PreprocessArgs {
  std::string spec, in, out;
};

int cmd_preprocess(const PreprocessArgs& a, const std::vector<std::string>& args,
                   std::ostream& out) {
  const fs::path in(a.in), dir(a.out);
  std::vector<std::string> splits;
  for (const char* s : {"train", "test"}) {
    if (fs::exists(in / (std::string(s) + ".gten"))) splits.emplace_back(s);
  }
  if (splits.empty()) throw FormatError("no train.gten or test.gten in " + in.string());
  const auto num_classes = read_dataset_info(in);

  Manifest m("preprocess", args);
  m.config(KeyValueConfig::load(a.spec).entries());
  std::vector<std::pair<std::string, ImageBatch>> processed;
  for (const auto& split : splits) {
    auto cfg = KeyValueConfig::load(a.spec);
    const PreprocessSpec spec = parse_preprocess_spec(cfg, split);
    cfg.finish();
    ImageBatch batch = load_dataset(in, split, num_classes);
    spec.validate(batch.size(), batch.channels(), batch.width());
    batch.images = preprocess_images(batch.images, spec);
    processed.emplace_back(split, std::move(batch));
  }
  make_dir(dir);
  for (const auto& [split, batch] : processed) {
    save_dataset(batch, dir, split);
    m.artifact(dir / (split + ".gten"));
    m.artifact(dir / (split + "_labels.csv"));
    out << split << ": " << shape_to_string(batch.images.shape()) << "\n";
  }
  if (num_classes) {
    write_dataset_info(dir, *num_classes);
    m.artifact(dir / "dataset.txt");
  }
  m.write(dir / "manifest.txt");
  return kExitOk;
}

std::pair<ImageBatch, ImageBatch> load_train_test(const fs::path& data) {
  const auto L = read_dataset_info(data);
  return {load_dataset(data, "train", L), load_dataset(data, "test", L)};
}

struct TrainArgs {
  std::string config, data, out;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  auto cfg_file = KeyValueConfig::load(a.config);
  const TrainConfig cfg = TrainConfig::from_config(cfg_file);
  const auto [train_set, test_set] = load_train_test(a.data);

  Manifest m("train", args);
  m.config(cfg.to_entries());
  m.seed(cfg.seed);

  auto result = train(train_set, test_set, cfg,
                      [&](const EpochRecord& e, const AttentionModel&, const ClassifierModel&) {
                        if (a.quiet) return;
                        out << "epoch " << e.epoch << " loss " << format_real(e.train_loss)
                            << " train_acc " << format_real(e.train_acc) << " test_acc "
                            << format_real(e.test_acc) << " l1 " << format_real(e.l1_penalty)
                            << "\n";
                      });
  apply_eval_protocol(result.report, train_set, cfg);

  const fs::path dir(a.out);
  make_dir(dir);
  write_file(dir / "report.csv", result.report.to_csv());
  m.artifact(dir / "report.csv");
  save_checkpoint(result.attention.to_checkpoint(), dir / "attention.ckpt");
  m.artifact(dir / "attention.ckpt");
  save_checkpoint(result.classifier.to_checkpoint(), dir / "classifier.ckpt");
  m.artifact(dir / "classifier.ckpt");
  std::set<int> exported;
  for (const auto& snap : result.report.snapshots) {
    if (!exported.insert(snap.epoch).second) continue;
    const fs::path stem = dir / ("attention_epoch_" + std::to_string(snap.epoch));
    export_attention_map(snap.map, stem);
    m.artifact(stem.string() + ".csv");
    m.artifact(stem.string() + ".pgm");
  }
  m.result("selected_epochs", join_ints(result.report.selected_epochs));
  m.result("mean_acc", format_real(result.report.mean_acc));
  m.result("std_acc", format_real(result.report.std_acc));
  m.write(dir / "manifest.txt");
  out << "accuracy " << format_real(result.report.mean_acc) << " +- "
      << format_real(result.report.std_acc) << " at epochs "
      << join_ints(result.report.selected_epochs) << "\n";
  return kExitOk;
}

struct GradcheckArgs {
  std::string size = "8x8";
  std::size_t images = 2;
  std::uint64_t seed = 0;
  std::size_t channels = 1;
  std::size_t K = 4;
  real lambda = 0.1;
  std::string mode = "pixel_cnn";
  std::size_t hidden_kernel = 3;
  std::size_t depth = 2;
  std::size_t last_kernel = 1;
  bool dense = false;
  std::string stages = "4,4";
  std::string out;
  std::string fault_op;
  real fault_scale = 1.0;
};

int cmd_gradcheck(const GradcheckArgs& a, const std::vector<std::string>& args,
                  std::ostream& out) {
  PipelineCheckOptions o;
  std::tie(o.width, o.height) = parse_size(a.size);
  o.images = a.images;
  o.seed = a.seed;
  o.channels = a.channels;
  o.lambda = a.lambda;
  o.attention.mode = parse_attention_mode(a.mode);
  o.attention.channels = a.K;
  o.attention.hidden_kernel = a.hidden_kernel;
  o.attention.depth = a.depth;
  o.attention.last_kernel = a.last_kernel;
  o.attention.dense_connections = a.dense;
  o.stages.clear();
  for (long s : parse_int_list(a.stages, "--stages")) {
    if (s < 1) throw ConfigError("--stages entries must be positive");
    o.stages.push_back(static_cast<std::size_t>(s));
  }
  o.fault_op = a.fault_op;
  o.fault_scale = a.fault_scale;

  const auto r = check_pipeline_gradients(o);
  for (const auto& p : r.parameters) {
    out << p.name << " n=" << p.size << " max_rel=" << format_real(p.cmp.max_rel_error)
        << " max_abs=" << format_real(p.cmp.max_abs_error) << " refined=" << p.refined
        << (p.cmp.passed ? " ok" : " FAIL") << "\n";
  }
  out << "max relative error " << format_real(r.max_rel_error) << " (tolerance "
      << format_real(o.rtol) << ", h " << format_real(o.h) << ")\n"
      << (r.passed ? "PASS" : "FAIL") << "\n";

  if (!a.out.empty()) {
    const fs::path dir(a.out);
    make_dir(dir);
    std::string report = "parameter,size,max_rel_error,max_abs_error,refined,passed\n";
    for (const auto& p : r.parameters) {
      report += p.name + "," + std::to_string(p.size) + "," +
                format_real(p.cmp.max_rel_error) + "," + format_real(p.cmp.max_abs_error) +
                "," + std::to_string(p.refined) + "," + (p.cmp.passed ? "1" : "0") + "\n";
    }
    write_file(dir / "gradcheck.csv", report);
    Manifest m("gradcheck", args);
    m.seed(a.seed);
    m.config({{"size", a.size},
              {"images", std::to_string(a.images)},
              {"channels", std::to_string(a.channels)},
              {"K", std::to_string(a.K)},
              {"lambda", format_real(a.lambda)},
              {"attention_mode", a.mode},
              {"hidden_kernel", std::to_string(a.hidden_kernel)},
              {"depth", std::to_string(a.depth)},
              {"last_kernel", std::to_string(a.last_kernel)},
              {"dense_connections", a.dense ? "true" : "false"},
              {"stages", a.stages}});
    m.artifact(dir / "gradcheck.csv");
    m.result("max_rel_error", format_real(r.max_rel_error));
    m.result("passed", r.passed ? "true" : "false");
    m.write(dir / "manifest.txt");
  }
  return r.passed ? kExitOk : kExitCheckFailed;
}

struct SweepArgs {
  std::string config, grid, data, out;
  int jobs = 1;
};

int cmd_sweep(const SweepArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  auto cfg_file = KeyValueConfig::load(a.config);
  const TrainConfig base = TrainConfig::from_config(cfg_file);
  auto grid_file = KeyValueConfig::load(a.grid);
  const SweepGrid grid = SweepGrid::from_config(grid_file);
  if (a.jobs < 1) throw ConfigError("--jobs must be >= 1");
  const auto [train_set, test_set] = load_train_test(a.data);

  Manifest m("sweep", args);
  m.config(base.to_entries());
  for (const auto& [k, v] : grid_file.entries()) m.config({{"grid." + k, v}});
  m.seed(base.seed);

  const auto rows = sweep(train_set, test_set, base, grid, a.jobs);
  const std::string csv = sweep_csv(rows);
  const fs::path path(a.out);
  if (path.has_parent_path()) make_dir(path.parent_path());
  write_file(path, csv);
  m.artifact(path);
  m.write(path.string() + ".manifest.txt");
  out << csv;
  return kExitOk;
}

int guarded(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "divergence at epoch " << e.epoch() << ": " << e.what() << "\n";
    return kExitDivergence;
  } catch (const FormatError& e) {
    err << "data format error: " << e.what() << "\n";
    return kExitDataFormat;
  } catch (const DimensionError& e) {
    err << "data format error: " << e.what() << "\n";
    return kExitDataFormat;
  } catch (const IndexError& e) {
    err << "data format error: " << e.what() << "\n";
    return kExitDataFormat;
  } catch (const ContractError& e) {
    err << "data format error: " << e.what() << "\n";
    return kExitDataFormat;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitDataFormat;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Global spatial attention: data generation, preprocessing, training, "
               "gradient checks and sweeps",
               "gsa"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic structured-image dataset");
  gen_cmd->add_option("--spec", gen.spec, "Synthetic spec (key = value)")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Crop, resize, flip and standardize");
  pre_cmd->add_option("--spec", pre.spec, "Preprocess spec (key = value)")->required();
  pre_cmd->add_option("--in", pre.in, "Input dataset directory")->required();
  pre_cmd->add_option("--out", pre.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train attention and classifier jointly");
  train_cmd->add_option("--config", tr.config, "Train config (key = value)")->required();
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch lines");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every parameter");
  gc_cmd->add_option("--size", gc.size, "Image size WxH")->capture_default_str();
  gc_cmd->add_option("--images", gc.images, "Number of images")->capture_default_str();
  gc_cmd->add_option("--seed", gc.seed, "Seed")->capture_default_str();
  gc_cmd->add_option("--channels", gc.channels, "Channels per image")->capture_default_str();
  gc_cmd->add_option("-K,--K", gc.K, "Pixel CNN channels")->capture_default_str();
  gc_cmd->add_option("--lambda", gc.lambda, "L1 coefficient")->capture_default_str();
  gc_cmd->add_option("--mode", gc.mode, "pixel_cnn, l1_pixel_weights or none")
      ->capture_default_str();
  gc_cmd->add_option("--hidden-kernel", gc.hidden_kernel)->capture_default_str();
  gc_cmd->add_option("--depth", gc.depth)->capture_default_str();
  gc_cmd->add_option("--last-kernel", gc.last_kernel)->capture_default_str();
  gc_cmd->add_flag("--dense", gc.dense, "Dense connections in the pixel CNN");
  gc_cmd->add_option("--stages", gc.stages, "Classifier stage widths")->capture_default_str();
  gc_cmd->add_option("--out", gc.out, "Optional directory for a report and manifest");
  gc_cmd->add_option("--fault-op", gc.fault_op)->group("");
  gc_cmd->add_option("--fault-scale", gc.fault_scale)->group("");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over K, lambda and E");
  sweep_cmd->add_option("--config", sw.config, "Base train config")->required();
  sweep_cmd->add_option("--grid", sw.grid, "Grid file: K, lambda, E as lists")->required();
  sweep_cmd->add_option("--data", sw.data, "Dataset directory")->required();
  sweep_cmd->add_option("--out", sw.out, "Output CSV")->required();
  sweep_cmd->add_option("--jobs", sw.jobs, "Parallel grid cells")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (gen_cmd->parsed()) return guarded([&] { return cmd_gen(gen, args, out); }, err);
  if (pre_cmd->parsed()) return guarded([&] { return cmd_preprocess(pre, args, out); }, err);
  if (train_cmd->parsed()) return guarded([&] { return cmd_train(tr, args, out); }, err);
  if (gc_cmd->parsed()) return guarded([&] { return cmd_gradcheck(gc, args, out); }, err);
  if (sweep_cmd->parsed()) return guarded([&] { return cmd_sweep(sw, args, out); }, err);
  return kExitConfig;
}

}  // namespace gsa
