#include "gsa/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "gsa/config.hpp"
#include "gsa/error.hpp"
#include "gsa/ops.hpp"
#include "gsa/serialize.hpp"

namespace gsa {

std::string to_string(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::kPixelCnn: return "pixel_cnn";
    case AttentionMode::kL1PixelWeights: return "l1_pixel_weights";
    case AttentionMode::kNone: return "none";
  }
  return "?";
}

AttentionMode parse_attention_mode(const std::string& text) {
  if (text == "pixel_cnn") return AttentionMode::kPixelCnn;
  if (text == "l1_pixel_weights") return AttentionMode::kL1PixelWeights;
  if (text == "none") return AttentionMode::kNone;
  throw ConfigError("attention_mode must be pixel_cnn, l1_pixel_weights or none, got '" +
                    text + "'");
}

void AttentionConfig::validate() const {
  if (mode != AttentionMode::kPixelCnn) return;
  if (channels < 1) throw ConfigError("K must be >= 1");
  if (depth < 2) throw ConfigError("pixel CNN depth must be >= 2");
  if (hidden_kernel % 2 == 0 || last_kernel % 2 == 0) {
    throw ConfigError("pixel CNN kernel sizes must be odd to preserve W x H");
  }
}

Tensor build_pixel_representation(const ImageBatch& images) {
  if (!images.images.defined() || images.images.rank() != 4) {
    throw ContractError("pixel representation needs an N x C x W x H batch");
  }
  return images.images.reshaped(
      {1, images.size() * images.channels(), images.width(), images.height()});
}

Tensor unreshape_pixel_representation(const Tensor& pixels, std::size_t num_images) {
  if (pixels.rank() != 4 || pixels.dim(0) != 1 || num_images == 0 ||
      pixels.dim(1) % num_images != 0) {
    throw DimensionError("cannot split " + shape_to_string(pixels.shape()) + " into " +
                         std::to_string(num_images) + " images");
  }
  return pixels.reshaped(
      {num_images, pixels.dim(1) / num_images, pixels.dim(2), pixels.dim(3)});
}

std::size_t pixel_cnn_parameter_count(std::size_t K, std::size_t N, std::size_t C) {
  return K * (3 * 3 * N * C + 1) + (K + 1);
}

AttentionModel AttentionModel::build(const AttentionConfig& cfg, std::size_t num_images,
                                     std::size_t channels, std::size_t width,
                                     std::size_t height, Rng& rng) {
  cfg.validate();
  if (num_images == 0 || channels == 0 || width == 0 || height == 0) {
    throw ConfigError("attention model needs a non-empty dataset shape");
  }
  AttentionModel m;
  m.cfg_ = cfg;
  m.num_images_ = num_images;
  m.channels_ = channels;
  m.width_ = width;
  m.height_ = height;

  switch (cfg.mode) {
    case AttentionMode::kNone:
      break;
    case AttentionMode::kL1PixelWeights:
      m.pixel_weights_ = Tensor::full({1, 1, width, height}, 1.0, true);
      break;
    case AttentionMode::kPixelCnn: {
      const std::size_t nc = num_images * channels;
      auto make_layer = [&](std::size_t in_ch, std::size_t out_ch, std::size_t k) {
        ConvLayer layer;
        layer.kernel = Tensor({out_ch, in_ch, k, k}, true);
        layer.bias = Tensor({out_ch}, true);
        layer.padding = (k - 1) / 2;
        const real bound = 1.0 / std::sqrt(static_cast<real>(in_ch * k * k));
        std::uniform_real_distribution<real> dist(-bound, bound);
        for (auto& w : layer.kernel.values()) w = dist(rng);
        return layer;
      };
      for (std::size_t l = 0; l + 1 < cfg.depth; ++l) {
        std::size_t in_ch = l == 0 ? nc : cfg.channels;
        if (cfg.dense_connections && l > 0) in_ch = nc + l * cfg.channels;
        m.layers_.push_back(make_layer(in_ch, cfg.channels, cfg.hidden_kernel));
      }
      const std::size_t last_in =
          cfg.dense_connections ? nc + (cfg.depth - 1) * cfg.channels : cfg.channels;
      m.layers_.push_back(make_layer(last_in, 1, cfg.last_kernel));
      break;
    }
  }
  m.collect_parameters();
  return m;
}

void AttentionModel::collect_parameters() {
  params_.clear();
  for (const auto& l : layers_) {
    params_.push_back(l.kernel);
    params_.push_back(l.bias);
  }
  if (pixel_weights_.defined()) params_.push_back(pixel_weights_);
}

std::size_t AttentionModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

Tensor AttentionModel::forward(GradientTape& tape, const Tensor& pixels) const {
  if (pixels.rank() != 4 || pixels.dim(0) != 1 ||
      pixels.dim(1) != num_images_ * channels_ || pixels.dim(2) != width_ ||
      pixels.dim(3) != height_) {
    throw DimensionError("attention model built for 1x" +
                         std::to_string(num_images_ * channels_) + "x" +
                         std::to_string(width_) + "x" + std::to_string(height_) +
                         " pixels, got " + shape_to_string(pixels.shape()));
  }
  switch (cfg_.mode) {
    case AttentionMode::kNone:
      return Tensor::full({1, 1, width_, height_}, 1.0);
    case AttentionMode::kL1PixelWeights:
      return pixel_weights_;
    case AttentionMode::kPixelCnn:
      break;
  }
  std::vector<Tensor> seen{pixels};
  Tensor h = pixels;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const ConvLayer& layer = layers_[l];
    Tensor in = (cfg_.dense_connections && l > 0) ? concat_channels(tape, seen) : h;
    Tensor z = conv2d(tape, in, layer.kernel, layer.bias, 1, layer.padding);
    if (l + 1 == layers_.size()) return sigmoid(tape, z);
    h = relu(tape, z);
    seen.push_back(h);
  }
  throw ContractError("pixel CNN has no layers");
}

Tensor AttentionModel::penalty(GradientTape& tape, const Tensor& map) const {
  if (cfg_.mode == AttentionMode::kNone) return Tensor::scalar(0.0);
  return l1_mean(tape, map);
}

Checkpoint AttentionModel::to_checkpoint() const {
  Checkpoint c;
  c.header = {{"model", "attention"},
              {"attention_mode", to_string(cfg_.mode)},
              {"K", std::to_string(cfg_.channels)},
              {"hidden_kernel", std::to_string(cfg_.hidden_kernel)},
              {"depth", std::to_string(cfg_.depth)},
              {"last_kernel", std::to_string(cfg_.last_kernel)},
              {"dense_connections", cfg_.dense_connections ? "true" : "false"},
              {"N", std::to_string(num_images_)},
              {"C", std::to_string(channels_)},
              {"W", std::to_string(width_)},
              {"H", std::to_string(height_)}};
  c.tensors = params_;
  return c;
}

AttentionModel AttentionModel::from_checkpoint(const Checkpoint& ckpt) {
  auto cfg = KeyValueConfig::parse(format_key_values(ckpt.header), "attention checkpoint");
  if (cfg.take_string("model") != "attention") {
    throw FormatError("checkpoint does not hold an attention model");
  }
  AttentionConfig ac;
  ac.mode = parse_attention_mode(cfg.take_string("attention_mode"));
  ac.channels = static_cast<std::size_t>(cfg.take_int("K"));
  ac.hidden_kernel = static_cast<std::size_t>(cfg.take_int("hidden_kernel"));
  ac.depth = static_cast<std::size_t>(cfg.take_int("depth"));
  ac.last_kernel = static_cast<std::size_t>(cfg.take_int("last_kernel"));
  ac.dense_connections = cfg.take_bool("dense_connections", false);
  const auto N = static_cast<std::size_t>(cfg.take_int("N"));
  const auto C = static_cast<std::size_t>(cfg.take_int("C"));
  const auto W = static_cast<std::size_t>(cfg.take_int("W"));
  const auto H = static_cast<std::size_t>(cfg.take_int("H"));
  cfg.finish();
  Rng rng(0);
  AttentionModel m = build(ac, N, C, W, H, rng);
  if (ckpt.tensors.size() != m.params_.size()) {
    throw FormatError("attention checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                      " tensors, model needs " + std::to_string(m.params_.size()));
  }
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    if (ckpt.tensors[i].shape() != m.params_[i].shape()) {
      throw FormatError("attention checkpoint tensor " + std::to_string(i) +
                        " has shape " + shape_to_string(ckpt.tensors[i].shape()));
    }
    auto src = ckpt.tensors[i].values();
    std::copy(src.begin(), src.end(), m.params_[i].values().begin());
  }
  return m;
}

namespace {

void require_map(const Tensor& map) {
  if (map.rank() != 4 || map.dim(0) != 1 || map.dim(1) != 1) {
    throw DimensionError("attention map must be 1 x 1 x W x H, got " +
                         shape_to_string(map.shape()));
  }
}

}  // namespace

std::string attention_map_csv(const Tensor& map) {
  require_map(map);
  const std::size_t W = map.dim(2), H = map.dim(3);
  std::string out;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      if (x) out += ',';
      out += format_real(map[x * H + y]);
    }
    out += '\n';
  }
  return out;
}

std::string attention_map_pgm(const Tensor& map) {
  require_map(map);
  const std::size_t W = map.dim(2), H = map.dim(3);
  auto v = map.values();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const real lo = *lo_it, range = *hi_it - *lo_it;
  std::string out = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      real norm = range > 0.0 ? (v[x * H + y] - lo) / range : 0.0;
      const long byte = std::lround(std::clamp(norm, 0.0, 1.0) * 255.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(byte)));
    }
  }
  return out;
}

void export_attention_map(const Tensor& map, const std::filesystem::path& stem) {
  write_file(stem.string() + ".csv", attention_map_csv(map));
  write_file(stem.string() + ".pgm", attention_map_pgm(map));
}

}  // namespace gsa
