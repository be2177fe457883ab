#include "gsa/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "gsa/error.hpp"
#include "gsa/rng.hpp"
#include "gsa/serialize.hpp"

namespace gsa {

void ImageBatch::validate() const {
  if (!images.defined() || images.rank() != 4) {
    throw ContractError("image batch must be an N x C x W x H tensor");
  }
  if (labels.size() != size()) {
    throw ContractError("image batch has " + std::to_string(size()) +
                        " images but " + std::to_string(labels.size()) + " labels");
  }
  if (num_classes < 1) throw ContractError("image batch needs num_classes >= 1");
  for (int l : labels) {
    if (l < 0 || l >= num_classes) {
      throw ContractError("label " + std::to_string(l) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
  }
  for (real v : images.values()) {
    if (!std::isfinite(v)) throw ContractError("image batch contains non-finite values");
  }
}

ImageBatch ImageBatch::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("empty image subset");
  const std::size_t per = channels() * width() * height();
  Tensor out({indices.size(), channels(), width(), height()});
  std::vector<int> labs;
  labs.reserve(indices.size());
  auto src = images.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t n = indices[i];
    if (n >= size()) throw IndexError("image index " + std::to_string(n) + " out of range");
    std::copy_n(src.begin() + static_cast<long>(n * per), per,
                dst.begin() + static_cast<long>(i * per));
    labs.push_back(labels[n]);
  }
  return ImageBatch{out, std::move(labs), num_classes};
}

// ---------------------------------------------------------------------------

namespace {

void require_image(const Tensor& image, const char* op) {
  if (image.rank() != 3) {
    throw DimensionError(std::string(op) + ": expected a C x W x H image, got " +
                         shape_to_string(image.shape()));
  }
}

struct Tap {
  std::size_t src;
  real weight;
};

// Overlap weights along one axis, computed on the integer grid scaled by
// n_out * n_in so that integral scale factors give exact weights.
std::vector<std::vector<Tap>> area_weights(std::size_t n_in, std::size_t n_out) {
  std::vector<std::vector<Tap>> taps(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    // footprint [o * n_in, (o + 1) * n_in), pixel s covers [s * n_out, (s + 1) * n_out)
    const std::size_t lo = o * n_in, hi = (o + 1) * n_in;
    for (std::size_t s = lo / n_out; s * n_out < hi && s < n_in; ++s) {
      const std::size_t a = std::max(lo, s * n_out);
      const std::size_t b = std::min(hi, (s + 1) * n_out);
      if (b > a) {
        taps[o].push_back({s, static_cast<real>(b - a) / static_cast<real>(n_in)});
      }
    }
  }
  return taps;
}

}  // namespace

Tensor crop_columns(const Tensor& image, std::size_t left, std::size_t right) {
  require_image(image, "crop_columns");
  const std::size_t C = image.dim(0), W = image.dim(1), H = image.dim(2);
  if (!(left < right && right < W)) {
    throw ContractError("crop_columns: need 0 <= left < right < W, got left=" +
                        std::to_string(left) + " right=" + std::to_string(right) +
                        " W=" + std::to_string(W));
  }
  const std::size_t w = right - left + 1;
  Tensor out({C, w, H});
  auto src = image.values();
  auto dst = out.values();
  for (std::size_t c = 0; c < C; ++c) {
    std::copy_n(src.begin() + static_cast<long>((c * W + left) * H), w * H,
                dst.begin() + static_cast<long>(c * w * H));
  }
  return out;
}

Tensor resize_area(const Tensor& image, std::size_t width, std::size_t height) {
  require_image(image, "resize_area");
  if (width == 0 || height == 0) throw ConfigError("resize_area: target must be >= 1x1");
  const std::size_t C = image.dim(0), W = image.dim(1), H = image.dim(2);
  if (W == width && H == height) return image.clone();
  const auto xs = area_weights(W, width);
  const auto ys = area_weights(H, height);
  Tensor out({C, width, height});
  auto src = image.values();
  auto dst = out.values();
  for (std::size_t c = 0; c < C; ++c) {
    const real* plane = src.data() + c * W * H;
    for (std::size_t ox = 0; ox < width; ++ox) {
      for (std::size_t oy = 0; oy < height; ++oy) {
        // Accumulate deviations from the first covered pixel: a constant
        // footprint then reproduces its value exactly.
        const real ref = plane[xs[ox][0].src * H + ys[oy][0].src];
        real acc = 0.0;
        for (const Tap& tx : xs[ox]) {
          for (const Tap& ty : ys[oy]) {
            acc += tx.weight * ty.weight * (plane[tx.src * H + ty.src] - ref);
          }
        }
        dst[(c * width + ox) * height + oy] = ref + acc;
      }
    }
  }
  return out;
}

Tensor hflip(const Tensor& image) {
  require_image(image, "hflip");
  const std::size_t C = image.dim(0), W = image.dim(1), H = image.dim(2);
  Tensor out(image.shape());
  auto src = image.values();
  auto dst = out.values();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t x = 0; x < W; ++x) {
      std::copy_n(src.begin() + static_cast<long>((c * W + (W - 1 - x)) * H), H,
                  dst.begin() + static_cast<long>((c * W + x) * H));
    }
  }
  return out;
}

Tensor normalize_standardize(const Tensor& image,
                             std::span<const ChannelStats> stats) {
  require_image(image, "normalize_standardize");
  const std::size_t C = image.dim(0), plane = image.dim(1) * image.dim(2);
  if (stats.size() != C) {
    throw ConfigError("channel_stats has " + std::to_string(stats.size()) +
                      " entries for " + std::to_string(C) + " channels");
  }
  for (const auto& s : stats) {
    if (!(s.std > 0.0)) throw ConfigError("channel_stats: std must be > 0");
  }
  Tensor out(image.shape());
  auto src = image.values();
  auto dst = out.values();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      dst[c * plane + i] = (src[c * plane + i] / 255.0 - stats[c].mean) / stats[c].std;
    }
  }
  return out;
}

std::vector<ChannelStats> imagenet_channel_stats() {
  return {{0.485, 0.229}, {0.456, 0.224}, {0.406, 0.225}};
}

void PreprocessSpec::validate(std::size_t num_images, std::size_t channels,
                              std::size_t width) const {
  if (!(crop_left < crop_right)) {
    throw ConfigError("crop_left must be < crop_right");
  }
  if (crop_right >= width) {
    throw ConfigError("crop_right " + std::to_string(crop_right) +
                      " outside image width " + std::to_string(width));
  }
  if (target_width == 0 || target_height == 0) {
    throw ConfigError("target_size must be at least 1x1");
  }
  for (auto i : flip_indices) {
    if (i >= num_images) {
      throw ConfigError("flip_indices: index " + std::to_string(i) +
                        " outside [0, " + std::to_string(num_images) + ")");
    }
  }
  if (!channel_stats.empty()) {
    if (channel_stats.size() != channels) {
      throw ConfigError("channel_stats must cover all " + std::to_string(channels) +
                        " channels");
    }
    for (const auto& s : channel_stats) {
      if (!(s.std > 0.0)) throw ConfigError("channel_stats: std must be > 0");
    }
  }
}

std::set<std::size_t> read_flip_indices(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("flip_indices: ") + e.what());
  }
  std::set<std::size_t> out;
  for (const auto& line : split_list(text, '\n')) {
    for (long v : parse_int_list(line, "flip_indices (" + path.string() + ")")) {
      if (v < 0) throw ConfigError("flip_indices: negative index");
      out.insert(static_cast<std::size_t>(v));
    }
  }
  return out;
}

PreprocessSpec parse_preprocess_spec(KeyValueConfig& cfg, const std::string& split) {
  PreprocessSpec spec;
  const long left = cfg.take_int("crop_left");
  const long right = cfg.take_int("crop_right");
  if (left < 0 || right < 0) throw ConfigError("crop_left/crop_right must be >= 0");
  spec.crop_left = static_cast<std::size_t>(left);
  spec.crop_right = static_cast<std::size_t>(right);

  const std::string size = cfg.take_string("target_size");
  const auto x = size.find('x');
  if (x == std::string::npos) throw ConfigError("target_size must look like WxH");
  const auto w = parse_int_list(size.substr(0, x), "target_size");
  const auto h = parse_int_list(size.substr(x + 1), "target_size");
  if (w.size() != 1 || h.size() != 1 || w[0] < 1 || h[0] < 1) {
    throw ConfigError("target_size must look like WxH with positive sizes");
  }
  spec.target_width = static_cast<std::size_t>(w[0]);
  spec.target_height = static_cast<std::size_t>(h[0]);

  std::string flips = cfg.take_string("flip_indices", "");
  if (!flips.empty()) {
    if (auto p = flips.find("{split}"); p != std::string::npos) {
      flips.replace(p, 7, split);
    }
    std::filesystem::path path(flips);
    if (path.is_relative()) path = cfg.base_dir() / path;
    spec.flip_indices = read_flip_indices(path);
  }

  const std::string stats = cfg.take_string("channel_stats", "none");
  if (stats != "none") {
    for (const auto& item : split_list(stats)) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw ConfigError("channel_stats entries must look like mean:std");
      }
      const auto m = parse_real_list(item.substr(0, colon), "channel_stats");
      const auto s = parse_real_list(item.substr(colon + 1), "channel_stats");
      if (m.size() != 1 || s.size() != 1) {
        throw ConfigError("channel_stats entries must look like mean:std");
      }
      if (!(s[0] > 0.0)) throw ConfigError("channel_stats: std must be > 0");
      spec.channel_stats.push_back({m[0], s[0]});
    }
  }
  return spec;
}

Tensor preprocess_image(const Tensor& image, const PreprocessSpec& spec, bool flip) {
  Tensor out = crop_columns(image, spec.crop_left, spec.crop_right);
  out = resize_area(out, spec.target_width, spec.target_height);
  if (flip) out = hflip(out);
  if (!spec.channel_stats.empty()) out = normalize_standardize(out, spec.channel_stats);
  return out;
}

Tensor preprocess_images(const Tensor& images, const PreprocessSpec& spec) {
  if (images.rank() != 4) {
    throw DimensionError("preprocess_images: expected N x C x W x H, got " +
                         shape_to_string(images.shape()));
  }
  const std::size_t N = images.dim(0), C = images.dim(1), W = images.dim(2),
                    H = images.dim(3);
  spec.validate(N, C, W);
  Tensor out({N, C, spec.target_width, spec.target_height});
  const std::size_t in_per = C * W * H;
  const std::size_t out_per = C * spec.target_width * spec.target_height;
  auto src = images.values();
  for (std::size_t n = 0; n < N; ++n) {
    Tensor image({C, W, H}, std::vector<real>(src.begin() + static_cast<long>(n * in_per),
                                              src.begin() + static_cast<long>((n + 1) * in_per)));
    Tensor done = preprocess_image(image, spec, spec.flip_indices.count(n) > 0);
    std::copy_n(done.values().begin(), out_per,
                out.values().begin() + static_cast<long>(n * out_per));
  }
  return out;
}

std::vector<int> labels_from_scores(const Tensor& scores) {
  if (scores.rank() != 2) throw DimensionError("labels_from_scores: expected rows x classes");
  const std::size_t rows = scores.dim(0), cols = scores.dim(1);
  std::vector<int> out(rows);
  auto v = scores.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (v[r * cols + c] > v[r * cols + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (N < 1 || C < 1 || W < 1 || H < 1) throw ConfigError("N, C, W, H must be >= 1");
  const Region& r = relevant_region;
  if (!(r.x0 < r.x1 && r.y0 < r.y1 && r.x0 > 0 && r.y0 > 0 && r.x1 < W && r.y1 < H)) {
    throw ConfigError("relevant_region must be a non-empty rectangle strictly inside the image");
  }
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(signal_strength >= 0.0)) throw ConfigError("signal_strength must be >= 0");
  if (r.area() * C < static_cast<std::size_t>(num_classes)) {
    throw ConfigError("relevant_region too small to host " +
                      std::to_string(num_classes) + " orthogonal templates");
  }
}

SyntheticSpec SyntheticSpec::from_config(KeyValueConfig& cfg) {
  SyntheticSpec s;
  auto take_size = [&](const char* key, std::size_t fallback) {
    const long v = cfg.take_int(key, static_cast<long>(fallback));
    if (v < 1) throw ConfigError(std::string(key) + " must be >= 1");
    return static_cast<std::size_t>(v);
  };
  s.N = take_size("N", s.N);
  s.C = take_size("C", s.C);
  s.W = take_size("W", s.W);
  s.H = take_size("H", s.H);
  if (auto region = cfg.take("relevant_region")) {
    const auto v = parse_int_list(*region, "relevant_region");
    if (v.size() != 4 || std::any_of(v.begin(), v.end(), [](long e) { return e < 0; })) {
      throw ConfigError("relevant_region must be 'x0,y0,x1,y1' with non-negative values");
    }
    s.relevant_region = {static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]),
                         static_cast<std::size_t>(v[2]), static_cast<std::size_t>(v[3])};
  }
  s.num_classes = static_cast<int>(cfg.take_int("num_classes", s.num_classes));
  s.signal_strength = cfg.take_real("signal_strength", s.signal_strength);
  s.noise_std = cfg.take_real("noise_std", s.noise_std);
  const long seed = cfg.take_int("seed", 0);
  if (seed < 0) throw ConfigError("seed must be >= 0");
  s.seed = static_cast<std::uint64_t>(seed);
  cfg.finish();
  s.validate();
  return s;
}

std::vector<std::pair<std::string, std::string>> SyntheticSpec::to_entries() const {
  const Region& r = relevant_region;
  return {{"N", std::to_string(N)},
          {"C", std::to_string(C)},
          {"W", std::to_string(W)},
          {"H", std::to_string(H)},
          {"relevant_region", std::to_string(r.x0) + "," + std::to_string(r.y0) + "," +
                                  std::to_string(r.x1) + "," + std::to_string(r.y1)},
          {"num_classes", std::to_string(num_classes)},
          {"signal_strength", format_real(signal_strength)},
          {"noise_std", format_real(noise_std)},
          {"seed", std::to_string(seed)}};
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Region& r = spec.relevant_region;
  const std::size_t rw = r.x1 - r.x0, rh = r.y1 - r.y0;
  const std::size_t dim = spec.C * rw * rh;
  const std::size_t L = static_cast<std::size_t>(spec.num_classes);

  // Orthonormal basis by modified Gram-Schmidt, then rescaled to unit RMS.
  std::vector<std::vector<real>> templates;
  {
    Rng rng = make_rng(spec.seed, Stream::kTemplates);
    std::normal_distribution<real> normal(0.0, 1.0);
    while (templates.size() < L) {
      std::vector<real> v(dim);
      for (auto& e : v) e = normal(rng);
      for (const auto& t : templates) {
        real dot = 0.0;
        for (std::size_t i = 0; i < dim; ++i) dot += v[i] * t[i];
        for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * t[i];
      }
      real norm = 0.0;
      for (real e : v) norm += e * e;
      norm = std::sqrt(norm);
      if (norm < 1e-9) continue;
      for (auto& e : v) e /= norm;
      templates.push_back(std::move(v));
    }
    const real rms_scale = std::sqrt(static_cast<real>(dim));
    for (auto& t : templates) {
      for (auto& e : t) e *= rms_scale;
    }
  }

  std::vector<int> labels(spec.N);
  for (std::size_t i = 0; i < spec.N; ++i) labels[i] = static_cast<int>(i % L);
  {
    Rng rng = make_rng(spec.seed, Stream::kLabels);
    std::shuffle(labels.begin(), labels.end(), rng);
  }

  const std::size_t per = spec.C * spec.W * spec.H;
  Tensor images({spec.N, spec.C, spec.W, spec.H});
  auto v = images.values();
  for (std::size_t n = 0; n < spec.N; ++n) {
    Rng rng = make_rng(spec.seed, Stream::kImage, n);
    std::normal_distribution<real> noise(0.0, 1.0);
    real* img = v.data() + n * per;
    for (std::size_t i = 0; i < per; ++i) img[i] = spec.noise_std * noise(rng);
    const auto& t = templates[static_cast<std::size_t>(labels[n])];
    std::size_t k = 0;
    for (std::size_t c = 0; c < spec.C; ++c) {
      for (std::size_t x = r.x0; x < r.x1; ++x) {
        for (std::size_t y = r.y0; y < r.y1; ++y) {
          img[(c * spec.W + x) * spec.H + y] += spec.signal_strength * t[k++];
        }
      }
    }
  }
  round_to_f32(images);

  Tensor mask({1, 1, spec.W, spec.H});
  for (std::size_t x = r.x0; x < r.x1; ++x) {
    for (std::size_t y = r.y0; y < r.y1; ++y) mask[x * spec.H + y] = 1.0;
  }
  return {ImageBatch{images, std::move(labels), spec.num_classes}, mask,
          std::move(templates)};
}

std::pair<ImageBatch, ImageBatch> split_train_test(const ImageBatch& all,
                                                   real train_fraction,
                                                   std::uint64_t seed) {
  const std::size_t N = all.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<real>(N)));
  if (n_train < 1 || n_train >= N) {
    throw ConfigError("train/test split leaves an empty side (N=" + std::to_string(N) + ")");
  }
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, Stream::kSplit);
  std::shuffle(order.begin(), order.end(), rng);
  std::span<const std::size_t> idx(order);
  return {all.subset(idx.first(n_train)), all.subset(idx.subspan(n_train))};
}

// ---------------------------------------------------------------------------

std::string encode_labels_csv(std::span<const int> labels) {
  std::string out = "index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += std::to_string(i) + "," + std::to_string(labels[i]) + "\n";
  }
  return out;
}

std::vector<int> decode_labels_csv(std::string_view text, std::size_t expected_rows,
                                   std::optional<int> num_classes,
                                   const std::string& what) {
  auto lines = split_list(text, '\n');
  if (lines.empty() || lines[0] != "index,label") {
    throw FormatError(what + ": header must be 'index,label'");
  }
  std::vector<int> labels;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    const auto cells = split_list(lines[row], ',');
    long index = -1, label = -1;
    try {
      if (cells.size() != 2) throw ConfigError("");
      index = parse_int_list(cells[0], "index").at(0);
      label = parse_int_list(cells[1], "label").at(0);
    } catch (const std::exception&) {
      throw FormatError(what + ": row " + std::to_string(row) + " is not 'index,label'");
    }
    if (index != static_cast<long>(row - 1)) {
      throw FormatError(what + ": field 'index' on row " + std::to_string(row) +
                        " should be " + std::to_string(row - 1));
    }
    if (label < 0 || (num_classes && label >= *num_classes)) {
      throw FormatError(what + ": field 'label' value " + std::to_string(label) +
                        " outside [0, " +
                        (num_classes ? std::to_string(*num_classes) : std::string("inf")) +
                        ")");
    }
    labels.push_back(static_cast<int>(label));
  }
  if (labels.size() != expected_rows) {
    throw FormatError(what + ": " + std::to_string(labels.size()) +
                      " label rows for " + std::to_string(expected_rows) + " images");
  }
  return labels;
}

void write_dataset_info(const std::filesystem::path& dir, int num_classes) {
  write_file(dir / "dataset.txt",
             format_key_values({{"num_classes", std::to_string(num_classes)}}));
}

std::optional<int> read_dataset_info(const std::filesystem::path& dir) {
  const auto path = dir / "dataset.txt";
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto cfg = KeyValueConfig::parse(read_file(path), path.string());
  const long L = cfg.take_int("num_classes");
  cfg.finish();
  if (L < 1) throw FormatError(path.string() + ": num_classes must be >= 1");
  return static_cast<int>(L);
}

void save_dataset(const ImageBatch& batch, const std::filesystem::path& dir,
                  const std::string& split) {
  std::filesystem::create_directories(dir);
  save_tensor(batch.images, dir / (split + ".gten"));
  write_file(dir / (split + "_labels.csv"), encode_labels_csv(batch.labels));
}

ImageBatch load_dataset(const std::filesystem::path& dir, const std::string& split,
                        std::optional<int> num_classes) {
  const auto img_path = dir / (split + ".gten");
  const auto lab_path = dir / (split + "_labels.csv");
  Tensor images = load_tensor(img_path);
  if (images.rank() != 4) {
    throw FormatError(img_path.string() + ": field 'rank' must be 4, got " +
                      std::to_string(images.rank()));
  }
  if (!num_classes) num_classes = read_dataset_info(dir);
  auto labels = decode_labels_csv(read_file(lab_path), images.dim(0), num_classes,
                                  lab_path.string());
  int L = num_classes ? *num_classes
                      : *std::max_element(labels.begin(), labels.end()) + 1;
  return ImageBatch{images, std::move(labels), L};
}

}  // namespace gsa
