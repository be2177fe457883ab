#pragma once

// Global spatial attention: one W x H weight map shared by every image of a
// dataset, produced by a small "pixel CNN" whose input treats each pixel
// location as a feature vector over all N*C image channels.

#include <filesystem>
#include <string>
#include <vector>

#include "gsa/checkpoint.hpp"
#include "gsa/data.hpp"
#include "gsa/rng.hpp"
#include "gsa/tape.hpp"
#include "gsa/tensor.hpp"

namespace gsa {

enum class AttentionMode {
  kPixelCnn,        // learned map in (0, 1)
  kL1PixelWeights,  // raw per-pixel multipliers, initialised to one
  kNone,            // constant all-ones map
};

std::string to_string(AttentionMode mode);
AttentionMode parse_attention_mode(const std::string& text);

struct AttentionConfig {
  AttentionMode mode = AttentionMode::kPixelCnn;
  std::size_t channels = 32;  // K, width of every hidden layer
  std::size_t hidden_kernel = 3;
  std::size_t depth = 2;  // conv layers including the output layer
  std::size_t last_kernel = 1;
  // Each layer after the first also sees the pixel representation and every
  // earlier hidden output, concatenated along channels.
  bool dense_connections = false;

  void validate() const;
};

// 1 x NC x W x H relabelling of the N x C x W x H image tensor: element
// [0, n*C + c, x, y] is image n, channel c at (x, y).
Tensor build_pixel_representation(const ImageBatch& images);
Tensor unreshape_pixel_representation(const Tensor& pixels, std::size_t num_images);

// K * (3*3*N*C + 1) + (K + 1): parameters of the default two-layer pixel CNN.
std::size_t pixel_cnn_parameter_count(std::size_t K, std::size_t N, std::size_t C);

class AttentionModel {
 public:
  AttentionModel() = default;

  // Hidden kernels ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  static AttentionModel build(const AttentionConfig& cfg, std::size_t num_images,
                              std::size_t channels, std::size_t width,
                              std::size_t height, Rng& rng);

  // Weight map of shape 1 x 1 x W x H.
  Tensor forward(GradientTape& tape, const Tensor& pixels) const;

  // Mean absolute map value; zero in kNone mode.
  Tensor penalty(GradientTape& tape, const Tensor& map) const;

  const AttentionConfig& config() const { return cfg_; }
  std::span<const Tensor> parameters() const { return params_; }
  std::vector<Tensor> parameters_vector() const { return params_; }
  std::size_t parameter_count() const;

  std::size_t num_images() const { return num_images_; }
  std::size_t image_channels() const { return channels_; }
  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }

  Checkpoint to_checkpoint() const;
  static AttentionModel from_checkpoint(const Checkpoint& ckpt);

 private:
  struct ConvLayer {
    Tensor kernel;
    Tensor bias;
    std::size_t padding = 0;
  };

  void collect_parameters();

  AttentionConfig cfg_;
  std::size_t num_images_ = 0, channels_ = 0, width_ = 0, height_ = 0;
  std::vector<ConvLayer> layers_;
  Tensor pixel_weights_;
  std::vector<Tensor> params_;
};

// Row per y, one column per x, values as stored.
std::string attention_map_csv(const Tensor& map);
// Binary P5 image: min-max normalised to [0, 255], 255 at the most important
// pixel; a constant map becomes all zeros.
std::string attention_map_pgm(const Tensor& map);
// Writes <stem>.csv and <stem>.pgm.
void export_attention_map(const Tensor& map, const std::filesystem::path& stem);

}  // namespace gsa
