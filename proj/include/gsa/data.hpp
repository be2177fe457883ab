#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gsa/config.hpp"
#include "gsa/tensor.hpp"

namespace gsa {

// N x C x W x H images with one label per image.
struct ImageBatch {
  Tensor images;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return images.dim(0); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t width() const { return images.dim(2); }
  std::size_t height() const { return images.dim(3); }

  // Throws ContractError when the invariants (N >= 1, labels in [0, L),
  // finite values) do not hold.
  void validate() const;
  ImageBatch subset(std::span<const std::size_t> indices) const;
};

// ---------------------------------------------------------------------------
// Per-image preprocessing. Images are C x W x H; x (axis 1) is horizontal.

// Keeps columns left..right inclusive.
Tensor crop_columns(const Tensor& image, std::size_t left, std::size_t right);

// Area interpolation: every output pixel averages the source pixels under its
// back-projected footprint, weighted by overlap area. The same rule covers
// upscaling, where a footprint falls inside one or two source pixels.
Tensor resize_area(const Tensor& image, std::size_t width, std::size_t height);

Tensor hflip(const Tensor& image);

struct ChannelStats {
  real mean = 0.0;
  real std = 1.0;
};

// v -> (v / 255 - mean_c) / std_c.
Tensor normalize_standardize(const Tensor& image,
                             std::span<const ChannelStats> stats);

// ImageNet statistics used for the retinal and facial datasets.
std::vector<ChannelStats> imagenet_channel_stats();

struct PreprocessSpec {
  std::size_t crop_left = 0;
  std::size_t crop_right = 0;
  std::size_t target_width = 0;
  std::size_t target_height = 0;
  std::set<std::size_t> flip_indices;
  // Empty means the normalize/standardize step is skipped.
  std::vector<ChannelStats> channel_stats;

  void validate(std::size_t num_images, std::size_t channels,
                std::size_t width) const;
};

// Parses crop_left, crop_right, target_size ("WxH"), flip_indices (path to a
// newline-separated index list, "{split}" replaced by the split name, empty
// for none) and channel_stats ("mean:std,..." or "none").
PreprocessSpec parse_preprocess_spec(KeyValueConfig& cfg, const std::string& split);

std::set<std::size_t> read_flip_indices(const std::filesystem::path& path);

// crop -> resize -> flip (when selected) -> normalize/standardize.
Tensor preprocess_image(const Tensor& image, const PreprocessSpec& spec, bool flip);
// Applies preprocess_image to each image of an N x C x W x H tensor.
Tensor preprocess_images(const Tensor& images, const PreprocessSpec& spec);

// Index of the largest score per row, lowest index on ties; assigns one label
// per image from a rows x classes score table.
std::vector<int> labels_from_scores(const Tensor& scores);

// ---------------------------------------------------------------------------
// Synthetic structured images.

// Half-open rectangle [x0, x1) x [y0, y1).
struct Region {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::size_t area() const { return (x1 - x0) * (y1 - y0); }
  bool contains(std::size_t x, std::size_t y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

struct SyntheticSpec {
  std::size_t N = 200, C = 1, W = 32, H = 32;
  Region relevant_region{12, 12, 20, 20};
  int num_classes = 3;
  real signal_strength = 2.0;
  real noise_std = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  static SyntheticSpec from_config(KeyValueConfig& cfg);
  std::vector<std::pair<std::string, std::string>> to_entries() const;
};

struct SyntheticDataset {
  ImageBatch data;
  Tensor mask;  // 1 x 1 x W x H, 1 inside the relevant region
  std::vector<std::vector<real>> templates;  // per class, C x region values
};

// Background pixels are i.i.d. Gaussian noise. Inside the region, an image of
// class k additionally carries signal_strength * T_k, where the T_k are
// orthonormal (Gram-Schmidt over seeded Gaussian vectors) and scaled so each
// has unit root-mean-square over the region. Values are rounded to f32 so the
// dataset survives a GTEN round trip bit-exactly.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// Seeded shuffle, first round(train_fraction * N) images go to the train set.
std::pair<ImageBatch, ImageBatch> split_train_test(const ImageBatch& all,
                                                   real train_fraction,
                                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Storage: <dir>/<split>.gten, <dir>/<split>_labels.csv ("index,label") and
// <dir>/dataset.txt holding num_classes.

void save_dataset(const ImageBatch& batch, const std::filesystem::path& dir,
                  const std::string& split);
ImageBatch load_dataset(const std::filesystem::path& dir, const std::string& split,
                        std::optional<int> num_classes = std::nullopt);
void write_dataset_info(const std::filesystem::path& dir, int num_classes);
std::optional<int> read_dataset_info(const std::filesystem::path& dir);

std::string encode_labels_csv(std::span<const int> labels);
std::vector<int> decode_labels_csv(std::string_view text, std::size_t expected_rows,
                                   std::optional<int> num_classes,
                                   const std::string& what);

}  // namespace gsa
