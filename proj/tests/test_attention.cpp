#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "gsa/attention.hpp"
#include "gsa/error.hpp"
#include "gsa/ops.hpp"
#include "gsa/pipeline_check.hpp"
#include "gsa/serialize.hpp"

using namespace gsa;

namespace {

ImageBatch random_batch(std::size_t N, std::size_t C, std::size_t W, std::size_t H,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<real> d;
  ImageBatch b;
  b.images = Tensor({N, C, W, H});
  for (auto& v : b.images.values()) v = d(rng);
  b.labels.assign(N, 0);
  b.num_classes = 2;
  return b;
}

AttentionModel build(const AttentionConfig& cfg, const ImageBatch& b, std::uint64_t seed = 0) {
  Rng rng(seed);
  return AttentionModel::build(cfg, b.size(), b.channels(), b.width(), b.height(), rng);
}

Tensor map_of(const AttentionModel& m, const Tensor& pixels) {
  GradientTape tape(GradientTape::Mode::kInference);
  return m.forward(tape, pixels);
}

}  // namespace

// ---------------------------------------------------------------- pixel representation

TEST(PixelRepresentation, ShapeIsOneByNCByWByH) {
  const auto b = random_batch(2, 3, 4, 4, 1);
  EXPECT_EQ(build_pixel_representation(b).shape(), (Shape{1, 6, 4, 4}));
}

TEST(PixelRepresentation, SingleImageKeepsValues) {
  const auto b = random_batch(1, 1, 5, 3, 2);
  const Tensor p = build_pixel_representation(b);
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_EQ(p[i], b.images[i]);
}

TEST(PixelRepresentation, ElementLayoutAndRoundTrip) {
  const auto b = random_batch(3, 2, 4, 5, 3);
  const Tensor p = build_pixel_representation(b);
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t x = 0; x < 4; ++x) {
        for (std::size_t y = 0; y < 5; ++y) {
          EXPECT_EQ(p[((n * 2 + c) * 4 + x) * 5 + y], b.images[((n * 2 + c) * 4 + x) * 5 + y]);
        }
      }
    }
  }
  EXPECT_TRUE(unreshape_pixel_representation(p, 3).bitwise_equal(b.images));
}

TEST(PixelRepresentation, EmptyBatchIsContractError) {
  EXPECT_THROW(build_pixel_representation(ImageBatch{}), ContractError);
}

// ---------------------------------------------------------------- model

TEST(AttentionModel, ParameterCountMatchesClosedForm) {
  EXPECT_EQ(pixel_cnn_parameter_count(32, 100, 3), 86465u);
  for (std::size_t K : {8, 32}) {
    for (std::size_t N : {4, 100}) {
      for (std::size_t C : {1, 3}) {
        AttentionConfig cfg;
        cfg.channels = K;
        Rng rng(0);
        const auto m = AttentionModel::build(cfg, N, C, 4, 4, rng);
        EXPECT_EQ(m.parameter_count(), K * (3 * 3 * N * C + 1) + (K + 1));
      }
    }
  }
}

TEST(AttentionModel, NoneModeIsAllOnes) {
  const auto b = random_batch(3, 2, 6, 4, 4);
  AttentionConfig cfg;
  cfg.mode = AttentionMode::kNone;
  const auto m = build(cfg, b);
  const Tensor map = map_of(m, build_pixel_representation(b));
  EXPECT_EQ(map.shape(), (Shape{1, 1, 6, 4}));
  for (real v : map.values()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(m.parameter_count(), 0u);
  GradientTape tape;
  EXPECT_EQ(m.penalty(tape, map).item(), 0.0);
}

TEST(AttentionModel, ZeroParametersGiveHalfMap) {
  const auto b = random_batch(2, 1, 6, 6, 5);
  const auto m = build(AttentionConfig{}, b);
  for (Tensor p : m.parameters()) std::fill(p.values().begin(), p.values().end(), 0.0);
  const Tensor map = map_of(m, build_pixel_representation(b));
  for (real v : map.values()) EXPECT_EQ(v, 0.5);
  GradientTape tape;
  EXPECT_EQ(m.penalty(tape, map).item(), 0.5);
}

TEST(AttentionModel, PixelWeightsStartAtOne) {
  const auto b = random_batch(2, 1, 5, 5, 6);
  AttentionConfig cfg;
  cfg.mode = AttentionMode::kL1PixelWeights;
  const auto m = build(cfg, b);
  EXPECT_EQ(m.parameter_count(), 25u);
  const Tensor map = map_of(m, build_pixel_representation(b));
  for (real v : map.values()) EXPECT_EQ(v, 1.0);
  GradientTape tape;
  EXPECT_EQ(m.penalty(tape, map).item(), 1.0);
}

TEST(AttentionModel, OutputStrictlyInsideUnitInterval) {
  auto b = random_batch(4, 2, 8, 8, 7);
  for (auto& v : b.images.values()) v *= 50.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    AttentionConfig cfg;
    cfg.channels = 6;
    const Tensor map = map_of(build(cfg, b, seed), build_pixel_representation(b));
    for (real v : map.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(AttentionModel, VariantsPreserveSpatialSize) {
  const auto b = random_batch(2, 1, 7, 5, 8);
  const Tensor pixels = build_pixel_representation(b);
  std::vector<AttentionConfig> variants;
  for (std::size_t k : {5, 7}) variants.push_back({AttentionMode::kPixelCnn, 4, k});
  for (std::size_t d : {3, 4}) variants.push_back({AttentionMode::kPixelCnn, 4, 3, d});
  for (std::size_t k : {3, 5}) variants.push_back({AttentionMode::kPixelCnn, 4, 3, 2, k});
  variants.push_back({AttentionMode::kPixelCnn, 4, 3, 3, 1, true});
  for (const auto& cfg : variants) {
    const Tensor map = map_of(build(cfg, b), pixels);
    EXPECT_EQ(map.shape(), (Shape{1, 1, 7, 5}));
  }
}

TEST(AttentionModel, InvalidConfigurations) {
  const auto b = random_batch(1, 1, 4, 4, 9);
  EXPECT_THROW(build({AttentionMode::kPixelCnn, 4, 4}, b), ConfigError);
  EXPECT_THROW(build({AttentionMode::kPixelCnn, 4, 3, 1}, b), ConfigError);
  EXPECT_THROW(build({AttentionMode::kPixelCnn, 4, 3, 2, 2}, b), ConfigError);
  EXPECT_THROW(parse_attention_mode("local"), ConfigError);
}

TEST(AttentionModel, WrongPixelShapeIsDimensionError) {
  const auto b = random_batch(2, 1, 4, 4, 10);
  const auto m = build(AttentionConfig{}, b);
  const auto other = random_batch(3, 1, 4, 4, 11);
  GradientTape tape;
  EXPECT_THROW(m.forward(tape, build_pixel_representation(other)), DimensionError);
}

TEST(Globality, RepeatedEvaluationIsBitwiseIdentical) {
  const auto b = random_batch(5, 2, 8, 8, 12);
  const auto m = build(AttentionConfig{}, b);
  const Tensor pixels = build_pixel_representation(b);
  EXPECT_TRUE(map_of(m, pixels).bitwise_equal(map_of(m, pixels)));
}

TEST(Globality, ConsistentImagePermutationGivesSameMap) {
  const auto b = random_batch(5, 2, 8, 8, 13);
  const auto m = build(AttentionConfig{}, b);
  const Tensor map = map_of(m, build_pixel_representation(b));

  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  const ImageBatch pb = b.subset(perm);
  // Permute the first layer's input channels to match.
  const auto permuted = build(AttentionConfig{}, b);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    auto src = m.parameters()[i].values();
    Tensor dst = permuted.parameters()[i];
    std::copy(src.begin(), src.end(), dst.values().begin());
  }
  Tensor k0 = permuted.parameters()[0];
  const Tensor orig = m.parameters()[0];
  const std::size_t K = k0.dim(0), NC = k0.dim(1), kk = k0.dim(2) * k0.dim(3);
  for (std::size_t o = 0; o < K; ++o) {
    for (std::size_t n = 0; n < 5; ++n) {
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t t = 0; t < kk; ++t) {
          k0[(o * NC + n * 2 + c) * kk + t] = orig[(o * NC + perm[n] * 2 + c) * kk + t];
        }
      }
    }
  }
  const Tensor pmap = map_of(permuted, build_pixel_representation(pb));
  for (std::size_t i = 0; i < map.numel(); ++i) EXPECT_NEAR(pmap[i], map[i], 1e-12);
}

TEST(AttentionModel, CheckpointRoundTrip) {
  const auto b = random_batch(2, 1, 6, 6, 14);
  const auto m = build({AttentionMode::kPixelCnn, 3, 3, 3, 1, true}, b, 7);
  const auto back = AttentionModel::from_checkpoint(
      decode_checkpoint(encode_checkpoint(m.to_checkpoint()), "test"));
  ASSERT_EQ(back.parameters().size(), m.parameters().size());
  const Tensor pixels = build_pixel_representation(b);
  // Parameters pass through f32 storage.
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    for (std::size_t j = 0; j < m.parameters()[i].numel(); ++j) {
      EXPECT_EQ(back.parameters()[i][j], static_cast<real>(static_cast<float>(m.parameters()[i][j])));
    }
  }
  EXPECT_EQ(map_of(back, pixels).shape(), (Shape{1, 1, 6, 6}));
}

// ---------------------------------------------------------------- export

TEST(Export, MinMaxNormalization) {
  Tensor map({1, 1, 3, 1}, {0.2, 0.8, 0.65});
  const std::string pgm = attention_map_pgm(map);
  const std::string header = "P5\n3 1\n255\n";
  ASSERT_EQ(pgm.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 0]), 0);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 1]), 255);
  // (0.65 - 0.2) / 0.6 = 0.75 -> 191.25
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 2]), 191);
}

TEST(Export, ConstantMapIsAllZero) {
  const std::string pgm = attention_map_pgm(Tensor::full({1, 1, 4, 4}, 0.3));
  const std::string header = "P5\n4 4\n255\n";
  for (std::size_t i = header.size(); i < pgm.size(); ++i) EXPECT_EQ(pgm[i], '\0');
  EXPECT_EQ(pgm.size(), header.size() + 16);
}

TEST(Export, TwoByTwoCheckerboard) {
  // map[x][y]: [[0,1],[1,0]]
  const std::string pgm = attention_map_pgm(Tensor({1, 1, 2, 2}, {0.0, 1.0, 1.0, 0.0}));
  const std::string header = "P5\n2 2\n255\n";
  const std::string px = pgm.substr(header.size());
  ASSERT_EQ(px.size(), 4u);
  EXPECT_EQ(static_cast<unsigned char>(px[0]), 0);
  EXPECT_EQ(static_cast<unsigned char>(px[1]), 255);
  EXPECT_EQ(static_cast<unsigned char>(px[2]), 255);
  EXPECT_EQ(static_cast<unsigned char>(px[3]), 0);
}

TEST(Export, CsvRowPerY) {
  // W = 3, H = 2: row y lists x = 0..2.
  const Tensor map({1, 1, 3, 2}, {0.0, 0.5, 1.0, 1.5, 2.0, 2.5});
  EXPECT_EQ(attention_map_csv(map), "0,1,2\n0.5,1.5,2.5\n");
}

TEST(Export, WritesBothFilesAndReportsUnwritablePath) {
  const auto dir = std::filesystem::temp_directory_path() / "gsa_export_test";
  std::filesystem::create_directories(dir);
  export_attention_map(Tensor::full({1, 1, 2, 2}, 0.5), dir / "map");
  EXPECT_TRUE(std::filesystem::exists(dir / "map.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "map.pgm"));
  EXPECT_THROW(export_attention_map(Tensor::full({1, 1, 2, 2}, 0.5), dir / "missing" / "map"),
               IoError);
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------- gradients

TEST(AttentionGradients, EveryVariantPassesTheOracle) {
  std::vector<AttentionConfig> variants{
      {AttentionMode::kPixelCnn, 4},
      {AttentionMode::kPixelCnn, 4, 5},
      {AttentionMode::kPixelCnn, 4, 7},
      {AttentionMode::kPixelCnn, 4, 3, 3},
      {AttentionMode::kPixelCnn, 4, 3, 4},
      {AttentionMode::kPixelCnn, 4, 3, 2, 3},
      {AttentionMode::kPixelCnn, 4, 3, 2, 5},
      {AttentionMode::kPixelCnn, 4, 3, 3, 1, true},
      {AttentionMode::kL1PixelWeights, 4},
  };
  for (const auto& v : variants) {
    PipelineCheckOptions o;
    o.attention = v;
    const auto r = check_pipeline_gradients(o);
    EXPECT_TRUE(r.passed) << "hidden " << v.hidden_kernel << " depth " << v.depth << " last "
                          << v.last_kernel << " dense " << v.dense_connections
                          << " max rel " << r.max_rel_error;
  }
}
