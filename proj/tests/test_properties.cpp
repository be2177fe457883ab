#include <gtest/gtest.h>

#include <omp.h>

#include <cmath>
#include <cstring>
#include <random>

#include "gsa/kernels.hpp"
#include "gsa/ops.hpp"
#include "gsa/tape.hpp"

using namespace gsa;

namespace {

std::vector<real> randn(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<real> d;
  std::vector<real> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Tensor random_tensor(Shape shape, std::uint64_t seed, bool rg = false) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), randn(n, seed), rg);
}

real max_abs_diff(std::span<const real> a, std::span<const real> b) {
  real m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct Case {
  std::size_t W, H, k, stride, pad;
};

std::vector<Case> sweep_cases() {
  std::vector<Case> cases;
  for (std::size_t k : {1, 3, 5, 7}) {
    for (std::size_t pad = 0; pad <= 3; ++pad) {
      for (std::size_t stride : {1, 2}) {
        for (std::size_t W : {5, 8}) {
          for (std::size_t H : {6, 9}) {
            if (W + 2 * pad >= k && H + 2 * pad >= k) cases.push_back({W, H, k, stride, pad});
          }
        }
      }
    }
  }
  return cases;
}

}  // namespace

TEST(ConvShape, OutputSizeFormulaHoldsAcrossSweep) {
  GradientTape tape(GradientTape::Mode::kInference);
  for (const auto& c : sweep_cases()) {
    Tensor y = conv2d(tape, random_tensor({2, 3, c.W, c.H}, 1),
                      random_tensor({4, 3, c.k, c.k}, 2), Tensor({4}), c.stride, c.pad);
    const std::size_t ow = (c.W + 2 * c.pad - c.k) / c.stride + 1;
    const std::size_t oh = (c.H + 2 * c.pad - c.k) / c.stride + 1;
    EXPECT_EQ(y.shape(), (Shape{2, 4, ow, oh}))
        << "W" << c.W << " H" << c.H << " k" << c.k << " s" << c.stride << " p" << c.pad;
  }
}

TEST(ConvKernels, ParallelMatchesSerialReference) {
  for (const auto& c : sweep_cases()) {
    kernels::ConvGeometry g{2, 3, 4, c.W, c.H, c.k, c.stride, c.pad};
    const auto in = randn(g.input_size(), 3), w = randn(g.kernel_size(), 4),
               b = randn(4, 5), go = randn(g.output_size(), 6);
    std::vector<real> o1(g.output_size()), o2(g.output_size());
    kernels::serial::conv2d_forward(g, in, w, b, o1);
    kernels::parallel::conv2d_forward(g, in, w, b, o2);
    std::vector<real> gi1(in.size()), gi2(in.size()), gw1(w.size()), gw2(w.size()), gb1(4),
        gb2(4);
    kernels::serial::conv2d_backward_input(g, go, w, gi1);
    kernels::parallel::conv2d_backward_input(g, go, w, gi2);
    kernels::serial::conv2d_backward_weight(g, go, in, gw1);
    kernels::parallel::conv2d_backward_weight(g, go, in, gw2);
    kernels::serial::conv2d_backward_bias(g, go, gb1);
    kernels::parallel::conv2d_backward_bias(g, go, gb2);
    EXPECT_LT(max_abs_diff(o1, o2), 1e-12);
    EXPECT_LT(max_abs_diff(gi1, gi2), 1e-12);
    EXPECT_LT(max_abs_diff(gw1, gw2), 1e-12);
    EXPECT_LT(max_abs_diff(gb1, gb2), 1e-12);
  }
}

TEST(ConvKernels, BackwardAccumulatesIntoExistingBuffers) {
  kernels::ConvGeometry g{1, 2, 2, 4, 4, 3, 1, 1};
  const auto go = randn(g.output_size(), 7), w = randn(g.kernel_size(), 8);
  std::vector<real> once(g.input_size()), twice(g.input_size());
  kernels::parallel::conv2d_backward_input(g, go, w, once);
  kernels::parallel::conv2d_backward_input(g, go, w, twice);
  kernels::parallel::conv2d_backward_input(g, go, w, twice);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2.0 * once[i], 1e-12);
}

TEST(ConvKernels, ResultsIndependentOfThreadCount) {
  kernels::ConvGeometry g{3, 4, 5, 9, 7, 3, 1, 1};
  const auto in = randn(g.input_size(), 9), w = randn(g.kernel_size(), 10),
             b = randn(5, 11), go = randn(g.output_size(), 12);
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    std::vector<real> out(g.output_size()), gi(in.size()), gw(w.size());
    kernels::parallel::conv2d_forward(g, in, w, b, out);
    kernels::parallel::conv2d_backward_input(g, go, w, gi);
    kernels::parallel::conv2d_backward_weight(g, go, in, gw);
    out.insert(out.end(), gi.begin(), gi.end());
    out.insert(out.end(), gw.begin(), gw.end());
    return out;
  };
  const auto one = run(1);
  const auto four = run(4);
  omp_set_num_threads(kernels::max_threads());
  EXPECT_EQ(one, four);
}

TEST(Linearity, ConvIsLinearInInputForFixedKernel) {
  GradientTape tape(GradientTape::Mode::kInference);
  const Tensor k = random_tensor({3, 2, 3, 3}, 13);
  const Tensor zero_bias({3});
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor a = random_tensor({2, 2, 6, 5}, 100 + s);
    const Tensor b = random_tensor({2, 2, 6, 5}, 200 + s);
    const real alpha = 0.3 + s, beta = -1.7;
    Tensor combo({2, 2, 6, 5});
    for (std::size_t i = 0; i < combo.numel(); ++i) combo[i] = alpha * a[i] + beta * b[i];
    const Tensor lhs = conv2d(tape, combo, k, zero_bias, 1, 1);
    const Tensor ya = conv2d(tape, a, k, zero_bias, 1, 1);
    const Tensor yb = conv2d(tape, b, k, zero_bias, 1, 1);
    for (std::size_t i = 0; i < lhs.numel(); ++i) {
      EXPECT_NEAR(lhs[i], alpha * ya[i] + beta * yb[i], 1e-12);
    }
  }
}

TEST(Linearity, BroadcastMulIsBilinear) {
  GradientTape tape(GradientTape::Mode::kInference);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor x1 = random_tensor({2, 3, 4, 4}, 300 + s), x2 = random_tensor({2, 3, 4, 4}, 400 + s);
    const Tensor m1 = random_tensor({1, 1, 4, 4}, 500 + s), m2 = random_tensor({1, 1, 4, 4}, 600 + s);
    const real a = 1.5, b = -0.25;
    Tensor xs({2, 3, 4, 4}), ms({1, 1, 4, 4});
    for (std::size_t i = 0; i < xs.numel(); ++i) xs[i] = a * x1[i] + b * x2[i];
    for (std::size_t i = 0; i < ms.numel(); ++i) ms[i] = a * m1[i] + b * m2[i];
    const Tensor left = broadcast_mul(tape, xs, m1);
    const Tensor l1 = broadcast_mul(tape, x1, m1), l2 = broadcast_mul(tape, x2, m1);
    const Tensor right = broadcast_mul(tape, x1, ms);
    const Tensor r2 = broadcast_mul(tape, x1, m2);
    for (std::size_t i = 0; i < left.numel(); ++i) {
      EXPECT_NEAR(left[i], a * l1[i] + b * l2[i], 1e-12);
      EXPECT_NEAR(right[i], a * l1[i] + b * r2[i], 1e-12);
    }
  }
}

TEST(Determinism, RepeatedForwardBackwardIsBitwiseIdentical) {
  auto run = [] {
    GradientTape tape;
    Tensor x = random_tensor({2, 3, 8, 8}, 14, true);
    Tensor k = random_tensor({4, 3, 3, 3}, 15, true);
    Tensor b = random_tensor({4}, 16, true);
    Tensor map = random_tensor({1, 1, 8, 8}, 17, true);
    Tensor h = relu(tape, conv2d(tape, broadcast_mul(tape, x, map), k, b, 1, 1));
    Tensor loss = add(tape, mean(tape, max_pool2d(tape, h, 2)), l1_mean(tape, map));
    backward(loss, tape);
    std::vector<real> out{loss.item()};
    for (const Tensor* t : {&x, &k, &b, &map}) {
      auto g = t->grad();
      out.insert(out.end(), g.begin(), g.end());
    }
    return out;
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(real)), 0);
}

TEST(Finiteness, ForwardAndBackwardStayFiniteOnFiniteInputs) {
  GradientTape tape;
  Tensor x = random_tensor({2, 2, 8, 8}, 18, true);
  for (auto& v : x.values()) v *= 1e3;
  Tensor k = random_tensor({3, 2, 3, 3}, 19, true);
  Tensor z = conv2d(tape, x, k, Tensor({3}), 1, 1);
  Tensor s = sigmoid(tape, z);
  Tensor loss = add(tape, sum(tape, s), l1_mean(tape, z));
  backward(loss, tape);
  for (const Tensor* t : {&z, &s}) {
    for (real v : t->values()) EXPECT_TRUE(std::isfinite(v));
  }
  for (const Tensor* t : {&x, &k}) {
    for (real v : t->grad()) EXPECT_TRUE(std::isfinite(v));
  }
}
