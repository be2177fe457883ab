#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gsa/adam.hpp"
#include "gsa/error.hpp"
#include "gsa/gradcheck.hpp"
#include "gsa/ops.hpp"
#include "gsa/tape.hpp"
#include "gsa/tensor.hpp"

using namespace gsa;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool rg = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<real> d;
  Tensor t(std::move(shape), rg);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// Gradient of sum(w * f(x)) w.r.t. x by finite differences and by the tape.
void expect_grad_matches(const std::function<Tensor(GradientTape&, const Tensor&)>& op,
                         Tensor x, real rtol = 1e-6) {
  x.set_requires_grad(true);
  const Tensor probe_out = [&] {
    GradientTape t(GradientTape::Mode::kInference);
    return op(t, x);
  }();
  const Tensor w = random_tensor(probe_out.shape(), 99);
  auto f = [&](const Tensor& in) {
    GradientTape t(GradientTape::Mode::kInference);
    Tensor y = op(t, in);
    real s = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
    return s;
  };
  GradientTape tape;
  Tensor y = op(tape, x);
  Tensor loss = sum(tape, mul(tape, y, w));
  backward(loss, tape);
  const Tensor fd = finite_diff_grad(f, x, 1e-6);
  const auto cmp = compare_gradients(x.grad_or_zero(), fd.values(), rtol, 1e-6);
  EXPECT_TRUE(cmp.passed) << "max rel " << cmp.max_rel_error << " at " << cmp.worst_index;
}

}  // namespace

// ---------------------------------------------------------------- Tensor

TEST(Tensor, DataLengthIsProductOfShape) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.values().size(), 24u);
  EXPECT_FALSE(t.has_grad());
  t.set_requires_grad(true);
  EXPECT_EQ(t.ensure_grad().size(), 24u);
}

TEST(Tensor, RejectsZeroDimensions) {
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<real>(3)), DimensionError);
}

TEST(Tensor, CopiesShareStorageClonesDoNot) {
  Tensor a({2}, {1.0, 2.0});
  Tensor b = a;
  b[0] = 5.0;
  EXPECT_EQ(a[0], 5.0);
  Tensor c = a.clone();
  c[1] = 7.0;
  EXPECT_EQ(a[1], 2.0);
  EXPECT_FALSE(c.same_storage(a));
}

// ---------------------------------------------------------------- conv2d

TEST(Conv2d, ZeroInputGivesZeroOutput) {
  GradientTape tape;
  Tensor x({1, 1, 3, 3});
  Tensor k = random_tensor({1, 1, 3, 3}, 1);
  Tensor b({1}, {0.0});
  Tensor y = conv2d(tape, x, k, b, 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (real v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, CenterImpulseWithOnesKernelFillsEveryWindow) {
  GradientTape tape;
  Tensor x({1, 1, 3, 3});
  x[4] = 1.0;
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(tape, x, k, Tensor({1}), 1, 1);
  for (real v : y.values()) EXPECT_EQ(v, 1.0);
}

TEST(Conv2d, PixelRepresentationLayoutPreservesSpatialSize) {
  GradientTape tape;
  const std::size_t NC = 6, K = 5;
  Tensor y = conv2d(tape, random_tensor({1, NC, 7, 9}, 2), random_tensor({K, NC, 3, 3}, 3),
                    Tensor({K}), 1, 1);
  EXPECT_EQ(y.shape(), (Shape{1, K, 7, 9}));
}

TEST(Conv2d, MatchesHandEvaluatedSum) {
  // 1 x 1 x 3 x 2 input, 1 x 1 x 3 x 3 kernel, padding 1, stride 2.
  GradientTape tape;
  Tensor x({1, 1, 3, 2}, {1, 2, 3, 4, 5, 6});  // x[0][*]={1,2} x[1][*]={3,4} x[2][*]={5,6}
  Tensor k({1, 1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 2});
  Tensor y = conv2d(tape, x, k, Tensor({1}, {0.5}), 2, 1);
  // W' = (3 + 2 - 3) / 2 + 1 = 2, H' = (2 + 2 - 3) / 2 + 1 = 1.
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 1}));
  // out[0,0] = 0.5 + k00*x[-1][-1] + k11*x[0][0] + k22*x[1][1] = 0.5 + 1 + 2*4
  EXPECT_EQ(y[0], 9.5);
  // out[1,0] = 0.5 + k00*x[1][-1] + k11*x[2][0] + k22*x[3][1] = 0.5 + 5 + 0
  EXPECT_EQ(y[1], 5.5);
}

TEST(Conv2d, Errors) {
  GradientTape tape;
  EXPECT_THROW(conv2d(tape, Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), 1, 1),
               DimensionError);
  EXPECT_THROW(conv2d(tape, Tensor({1, 1, 4, 4}), Tensor({1, 1, 2, 2}), Tensor({1}), 1, 1),
               ConfigError);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  const Tensor k = random_tensor({3, 2, 3, 3}, 4);
  const Tensor b = random_tensor({3}, 5);
  expect_grad_matches([&](GradientTape& t, const Tensor& x) { return conv2d(t, x, k, b, 2, 1); },
                      random_tensor({2, 2, 5, 6}, 6));
  const Tensor x = random_tensor({2, 2, 5, 6}, 7);
  expect_grad_matches([&](GradientTape& t, const Tensor& kk) { return conv2d(t, x, kk, b, 1, 2); },
                      random_tensor({3, 2, 3, 3}, 8));
  expect_grad_matches([&](GradientTape& t, const Tensor& bb) { return conv2d(t, x, k, bb, 1, 0); },
                      random_tensor({3}, 9));
}

// ---------------------------------------------------------------- relu / sigmoid

TEST(Relu, Values) {
  GradientTape tape;
  Tensor y = relu(tape, Tensor({3}, {-1.0, 0.0, 2.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 2.0);
  Tensor neg = relu(tape, Tensor::full({2, 2}, -3.0));
  for (real v : neg.values()) EXPECT_EQ(v, 0.0);
}

TEST(Relu, SubgradientAtKinkIsZero) {
  GradientTape tape;
  Tensor x({3}, {-1.0, 2.0, 0.0}, true);
  Tensor loss = sum(tape, relu(tape, x));
  backward(loss, tape);
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
  EXPECT_EQ(x.grad()[2], 0.0);
}

TEST(Sigmoid, Values) {
  GradientTape tape;
  EXPECT_EQ(sigmoid(tape, Tensor::scalar(0.0)).item(), 0.5);
  for (real v : {-3.0, 0.7, 12.0}) {
    const real s = sigmoid(tape, Tensor::scalar(v)).item();
    const real m = sigmoid(tape, Tensor::scalar(-v)).item();
    EXPECT_NEAR(s, 1.0 - m, 1e-15);
  }
  // exp(-50) = 1.9287498479639178e-22.
  const real tiny = sigmoid(tape, Tensor::scalar(-50.0)).item();
  EXPECT_GT(tiny, 0.0);
  EXPECT_LE(tiny, 1e-20);
  EXPECT_NEAR(tiny / 1.9287498479639178e-22, 1.0, 1e-12);
}

TEST(Sigmoid, Gradient) {
  expect_grad_matches([](GradientTape& t, const Tensor& x) { return sigmoid(t, x); },
                      random_tensor({10}, 10));
}

// ---------------------------------------------------------------- cross-entropy

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogL) {
  GradientTape tape;
  const std::vector<int> labels{2};
  EXPECT_NEAR(softmax_cross_entropy(tape, Tensor({1, 3}), labels).item(), std::log(3.0), 1e-15);
}

TEST(SoftmaxCrossEntropy, LargeLogitStable) {
  GradientTape tape;
  const std::vector<int> labels{0};
  const real v = softmax_cross_entropy(tape, Tensor({1, 2}, {1000.0, 0.0}), labels).item();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 0.0, 1e-300);
}

TEST(SoftmaxCrossEntropy, BatchIsMeanOfRows) {
  GradientTape tape;
  Tensor logits({2, 3}, {0.1, -0.4, 2.0, 1.5, 0.3, -1.0});
  const std::vector<int> both{2, 0}, first{2}, second{0};
  const real a = softmax_cross_entropy(tape, Tensor({1, 3}, {0.1, -0.4, 2.0}), first).item();
  const real b = softmax_cross_entropy(tape, Tensor({1, 3}, {1.5, 0.3, -1.0}), second).item();
  EXPECT_NEAR(softmax_cross_entropy(tape, logits, both).item(), (a + b) / 2.0, 1e-15);
}

TEST(SoftmaxCrossEntropy, LabelOutOfRange) {
  GradientTape tape;
  const std::vector<int> bad{3};
  EXPECT_THROW(softmax_cross_entropy(tape, Tensor({1, 3}), bad), IndexError);
}

TEST(SoftmaxCrossEntropy, Gradient) {
  const std::vector<int> labels{1, 0, 2};
  expect_grad_matches(
      [&](GradientTape& t, const Tensor& z) { return softmax_cross_entropy(t, z, labels); },
      random_tensor({3, 3}, 11));
}

// ---------------------------------------------------------------- broadcast / l1

TEST(BroadcastMul, IdentityAndZeroMaps) {
  GradientTape tape;
  const Tensor x = random_tensor({2, 3, 4, 5}, 12);
  EXPECT_TRUE(broadcast_mul(tape, x, Tensor::full({1, 1, 4, 5}, 1.0)).bitwise_equal(x));
  const Tensor zero = broadcast_mul(tape, x, Tensor({1, 1, 4, 5}));
  for (real v : zero.values()) EXPECT_EQ(v, 0.0);
}

TEST(BroadcastMul, MapGradientSumsOverBatchAndChannels) {
  GradientTape tape;
  Tensor x = Tensor::full({2, 3, 4, 4}, 1.0);
  Tensor map({1, 1, 4, 4}, true);
  Tensor loss = sum(tape, broadcast_mul(tape, x, map));
  backward(loss, tape);
  for (real g : map.grad()) EXPECT_EQ(g, 6.0);
}

TEST(BroadcastMul, SpatialMismatch) {
  GradientTape tape;
  EXPECT_THROW(broadcast_mul(tape, Tensor({1, 1, 4, 4}), Tensor({1, 1, 4, 3})), DimensionError);
}

TEST(L1Mean, Values) {
  GradientTape tape;
  EXPECT_NEAR(l1_mean(tape, Tensor({3}, {1.0, -1.0, 2.0})).item(), 4.0 / 3.0, 1e-15);
  EXPECT_EQ(l1_mean(tape, Tensor({4})).item(), 0.0);
  Tensor x({3}, {-2.0, 0.0, 5.0}, true);
  Tensor loss = l1_mean(tape, x);
  backward(loss, tape);
  EXPECT_NEAR(x.grad()[0], -1.0 / 3.0, 1e-15);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_NEAR(x.grad()[2], 1.0 / 3.0, 1e-15);
}

// ---------------------------------------------------------------- tape

TEST(Tape, SumGivesOnes) {
  GradientTape tape;
  Tensor x = random_tensor({2, 3, 4}, 13, true);
  Tensor loss = sum(tape, x);
  backward(loss, tape);
  for (real g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Tape, SumOfSquares) {
  GradientTape tape;
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor loss = sum(tape, mul(tape, x, x));
  backward(loss, tape);
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Tape, ContributionsAccumulate) {
  // x feeds three ops; its gradient is the sum of the three contributions.
  GradientTape tape;
  Tensor x({2}, {1.5, -0.5}, true);
  Tensor loss = add(tape, add(tape, sum(tape, x), sum(tape, scale(tape, x, 2.0))),
                    sum(tape, mul(tape, x, x)));
  backward(loss, tape);
  EXPECT_EQ(x.grad()[0], 1.0 + 2.0 + 3.0);
  EXPECT_EQ(x.grad()[1], 1.0 + 2.0 - 1.0);
}

TEST(Tape, ClearZeroesGradients) {
  GradientTape tape;
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor y = mul(tape, x, x);
  Tensor loss = sum(tape, y);
  backward(loss, tape);
  tape.clear();
  for (real g : x.grad_or_zero()) EXPECT_EQ(g, 0.0);
  for (real g : y.grad_or_zero()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, NonScalarLossIsContractError) {
  GradientTape tape;
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor y = scale(tape, x, 2.0);
  EXPECT_THROW(backward(y, tape), ContractError);
}

TEST(Tape, InferenceModeRecordsNothing) {
  GradientTape tape(GradientTape::Mode::kInference);
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor y = sum(tape, mul(tape, x, x));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

// ---------------------------------------------------------------- finite differences

TEST(FiniteDiff, SumOfSquares) {
  Tensor x({1}, {3.0});
  auto f = [](const Tensor& t) { return t[0] * t[0]; };
  EXPECT_NEAR(finite_diff_grad(f, x, 1e-4)[0], 6.0, 1e-8);
  EXPECT_EQ(x[0], 3.0);
}

TEST(FiniteDiff, LinearIsExactForAnyStep) {
  Tensor x({3}, {0.25, -1.0, 2.0});
  auto f = [](const Tensor& t) { return 2.0 * t[0] - 4.0 * t[1] + 0.5 * t[2]; };
  for (real h : {0.5, 0.125, 1.0 / 1024}) {
    Tensor g = finite_diff_grad(f, x, h);
    EXPECT_EQ(g[0], 2.0);
    EXPECT_EQ(g[1], -4.0);
    EXPECT_EQ(g[2], 0.5);
  }
  EXPECT_THROW(finite_diff_grad(f, x, 0.0), ContractError);
}

TEST(FiniteDiff, CompareUsesAbsoluteFloorForTinyEntries) {
  const std::vector<real> a{1.0, 5e-7}, n{1.0005, 1e-7};
  const auto c = compare_gradients(a, n, 1e-3, 1e-6);
  EXPECT_TRUE(c.passed);
  const std::vector<real> bad{1.0, 5e-6};
  EXPECT_FALSE(compare_gradients(bad, n, 1e-3, 1e-6).passed);
}

// ---------------------------------------------------------------- other ops

TEST(Ops, MaxPoolLinearReshapeConcatGradients) {
  expect_grad_matches([](GradientTape& t, const Tensor& x) { return max_pool2d(t, x, 2); },
                      random_tensor({2, 3, 4, 6}, 14));
  const Tensor w = random_tensor({3, 5}, 15), b = random_tensor({3}, 16);
  expect_grad_matches([&](GradientTape& t, const Tensor& x) { return linear(t, x, w, b); },
                      random_tensor({4, 5}, 17));
  expect_grad_matches(
      [](GradientTape& t, const Tensor& x) { return reshape(t, x, {x.numel()}); },
      random_tensor({2, 3}, 18));
  const Tensor other = random_tensor({2, 1, 3, 3}, 19);
  expect_grad_matches(
      [&](GradientTape& t, const Tensor& x) { return concat_channels(t, {x, other, x}); },
      random_tensor({2, 2, 3, 3}, 20));
}

TEST(Ops, MaxPoolFirstMaximumWinsTies) {
  GradientTape tape;
  Tensor x({1, 1, 2, 2}, {1.0, 1.0, 1.0, 1.0}, true);
  Tensor loss = sum(tape, max_pool2d(tape, x, 2));
  backward(loss, tape);
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1] + x.grad()[2] + x.grad()[3], 0.0);
}

// ---------------------------------------------------------------- Adam

TEST(Adam, ZeroGradientZeroStateLeavesParameters) {
  Tensor p({2}, {0.3, -0.7}, true);
  p.ensure_grad();
  std::vector<Tensor> params{p};
  AdamState st;
  adam_step(params, st, {0.1, 0.9, 0.999, 1e-8, 0.0}, 1);
  EXPECT_EQ(p[0], 0.3);
  EXPECT_EQ(p[1], -0.7);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1; step = 0.1 / (1 + 1e-8).
  Tensor p({1}, {1.0}, true);
  p.ensure_grad()[0] = 1.0;
  std::vector<Tensor> params{p};
  AdamState st;
  adam_step(params, st, {0.1, 0.9, 0.999, 1e-8, 0.0}, 1);
  EXPECT_NEAR(p[0], 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.grad()[0], 1.0);
}

TEST(Adam, WeightDecayShrinksWithoutGradient) {
  Tensor p({1}, {1.0}, true);
  p.ensure_grad();
  std::vector<Tensor> params{p};
  AdamState st;
  adam_step(params, st, {0.01, 0.9, 0.999, 1e-8, 0.1}, 1);
  EXPECT_LT(p[0], 1.0);
}

TEST(Adam, Errors) {
  Tensor p({1}, {1.0}, true);
  std::vector<Tensor> params{p};
  AdamState st;
  EXPECT_THROW(adam_step(params, st, {}, 1), ContractError);
  p.ensure_grad();
  EXPECT_THROW(adam_step(params, st, {}, 0), ContractError);
}

TEST(Adam, MatchesRecurrenceOverSeveralSteps) {
  Tensor p({1}, {0.5}, true);
  Adam opt({p}, {0.05, 0.8, 0.99, 1e-8, 0.0});
  real x = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    const real g = 2.0 * p[0];  // d/dp p^2
    p.ensure_grad()[0] = g;
    opt.step();
    opt.zero_grad();
    m = 0.8 * m + 0.2 * g;
    v = 0.99 * v + 0.01 * g * g;
    x -= 0.05 * (m / (1 - std::pow(0.8, t))) / (std::sqrt(v / (1 - std::pow(0.99, t))) + 1e-8);
    EXPECT_NEAR(p[0], x, 1e-14);
  }
}

// ---------------------------------------------------------------- stability

TEST(Stability, LargeMagnitudeInputsStayFinite) {
  GradientTape tape;
  Tensor z({2, 3}, {1e4, -1e4, 0.0, -1e4, -1e4, 1e4}, true);
  const std::vector<int> labels{1, 0};
  Tensor loss = softmax_cross_entropy(tape, z, labels);
  backward(loss, tape);
  EXPECT_TRUE(std::isfinite(loss.item()));
  for (real g : z.grad()) EXPECT_TRUE(std::isfinite(g));
  Tensor s = sigmoid(tape, Tensor({4}, {1e4, -1e4, 700.0, -745.0}));
  for (real v : s.values()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
