#include "gsa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "gsa/error.hpp"
#include "gsa/kernels.hpp"

namespace gsa {

namespace {

// Adds g into t's gradient when t takes part in differentiation.
void accumulate(Tensor& t, std::span<const real> g) {
  if (!t.requires_grad()) return;
  auto dst = t.ensure_grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + " must have rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

}  // namespace

Tensor conv2d(GradientTape& tape, const Tensor& input, const Tensor& kernel,
              const Tensor& bias, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t k = kernel.dim(2);
  if (kernel.dim(3) != k) throw ConfigError("conv2d kernel must be square");
  if (k % 2 == 0) {
    throw ConfigError("conv2d kernel size must be odd, got " + std::to_string(k));
  }
  if (stride == 0) throw ConfigError("conv2d stride must be positive");
  if (kernel.dim(1) != input.dim(1)) {
    throw DimensionError("conv2d: input has " + std::to_string(input.dim(1)) +
                         " channels but kernel expects " +
                         std::to_string(kernel.dim(1)));
  }
  if (bias.numel() != kernel.dim(0)) {
    throw DimensionError("conv2d: bias length " + std::to_string(bias.numel()) +
                         " != output channels " + std::to_string(kernel.dim(0)));
  }
  kernels::ConvGeometry g;
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.out_channels = kernel.dim(0);
  g.width = input.dim(2);
  g.height = input.dim(3);
  g.kernel = k;
  g.stride = stride;
  g.padding = padding;
  if (g.width + 2 * padding < k || g.height + 2 * padding < k) {
    throw DimensionError("conv2d: kernel " + std::to_string(k) +
                         " larger than padded input " +
                         shape_to_string(input.shape()));
  }

  Tensor out({g.batch, g.out_channels, g.out_width(), g.out_height()});
  kernels::parallel::conv2d_forward(g, input.values(), kernel.values(),
                                    bias.values(), out.values());
  if (tape.should_record({&input, &kernel, &bias})) {
    tape.record("conv2d", {input, kernel, bias}, out,
                [g, input = input, kernel = kernel, bias = bias](std::span<const real> go) mutable {
                  if (input.requires_grad()) {
                    kernels::parallel::conv2d_backward_input(
                        g, go, kernel.values(), input.ensure_grad());
                  }
                  if (kernel.requires_grad()) {
                    kernels::parallel::conv2d_backward_weight(
                        g, go, input.values(), kernel.ensure_grad());
                  }
                  if (bias.requires_grad()) {
                    kernels::parallel::conv2d_backward_bias(g, go,
                                                            bias.ensure_grad());
                  }
                });
  }
  return out;
}

Tensor relu(GradientTape& tape, const Tensor& x) {
  Tensor out(x.shape());
  auto in = x.values();
  auto y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = in[i] > 0.0 ? in[i] : 0.0;
  if (tape.tracking_branches()) {
    for (std::size_t i = 0; i < y.size(); ++i) tape.mix_branch(in[i] > 0.0);
  }
  if (tape.should_record({&x})) {
    tape.record("relu", {x}, out, [x = x](std::span<const real> go) mutable {
      auto in = x.values();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (in[i] > 0.0) gx[i] += go[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(GradientTape& tape, const Tensor& x) {
  Tensor out(x.shape());
  auto in = x.values();
  auto y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (in[i] >= 0.0) {
      y[i] = 1.0 / (1.0 + std::exp(-in[i]));
    } else {
      const real e = std::exp(in[i]);
      y[i] = e / (1.0 + e);
    }
  }
  if (tape.should_record({&x})) {
    tape.record("sigmoid", {x}, out, [x = x, out = out](std::span<const real> go) mutable {
      auto y = out.values();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += go[i] * y[i] * (1.0 - y[i]);
      }
    });
  }
  return out;
}

Tensor max_pool2d(GradientTape& tape, const Tensor& x, std::size_t window) {
  require_rank(x, 4, "max_pool2d input");
  if (window == 0) throw ConfigError("max_pool2d window must be positive");
  const std::size_t B = x.dim(0), C = x.dim(1), W = x.dim(2), H = x.dim(3);
  if (W % window != 0 || H % window != 0) {
    throw DimensionError("max_pool2d: spatial size " + shape_to_string(x.shape()) +
                         " not divisible by window " + std::to_string(window));
  }
  const std::size_t ow = W / window, oh = H / window;
  Tensor out({B, C, ow, oh});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  auto in = x.values();
  auto y = out.values();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        std::size_t best = (bc * W + ox * window) * H + oy * window;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = (bc * W + ox * window + i) * H + oy * window + j;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (bc * ow + ox) * oh + oy;
        y[o] = in[best];
        (*argmax)[o] = best;
      }
    }
  }
  if (tape.tracking_branches()) {
    for (auto a : *argmax) tape.mix_branch(a);
  }
  if (tape.should_record({&x})) {
    tape.record("max_pool2d", {x}, out,
                [x = x, argmax](std::span<const real> go) mutable {
                  auto gx = x.ensure_grad();
                  for (std::size_t o = 0; o < go.size(); ++o) {
                    gx[(*argmax)[o]] += go[o];
                  }
                });
  }
  return out;
}

Tensor reshape(GradientTape& tape, const Tensor& x, Shape shape) {
  Tensor out = x.reshaped(std::move(shape));
  if (tape.should_record({&x})) {
    tape.record("reshape", {x}, out, [x = x](std::span<const real> go) mutable {
      accumulate(x, go);
    });
  }
  return out;
}

Tensor linear(GradientTape& tape, const Tensor& x, const Tensor& weight,
              const Tensor& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t B = x.dim(0), D = x.dim(1), L = weight.dim(0);
  if (weight.dim(1) != D) {
    throw DimensionError("linear: input width " + std::to_string(D) +
                         " != weight width " + std::to_string(weight.dim(1)));
  }
  if (bias.numel() != L) {
    throw DimensionError("linear: bias length " + std::to_string(bias.numel()) +
                         " != outputs " + std::to_string(L));
  }
  Tensor out({B, L});
  auto xv = x.values();
  auto wv = weight.values();
  auto bv = bias.values();
  auto y = out.values();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t l = 0; l < L; ++l) {
      real acc = bv[l];
      for (std::size_t d = 0; d < D; ++d) acc += xv[b * D + d] * wv[l * D + d];
      y[b * L + l] = acc;
    }
  }
  if (tape.should_record({&x, &weight, &bias})) {
    tape.record("linear", {x, weight, bias}, out,
                [x = x, weight = weight, bias = bias, B, D, L](std::span<const real> go) mutable {
                  if (x.requires_grad()) {
                    auto gx = x.ensure_grad();
                    auto wv = weight.values();
                    for (std::size_t b = 0; b < B; ++b) {
                      for (std::size_t l = 0; l < L; ++l) {
                        const real g = go[b * L + l];
                        for (std::size_t d = 0; d < D; ++d) gx[b * D + d] += g * wv[l * D + d];
                      }
                    }
                  }
                  if (weight.requires_grad()) {
                    auto gw = weight.ensure_grad();
                    auto xv = x.values();
                    for (std::size_t b = 0; b < B; ++b) {
                      for (std::size_t l = 0; l < L; ++l) {
                        const real g = go[b * L + l];
                        for (std::size_t d = 0; d < D; ++d) gw[l * D + d] += g * xv[b * D + d];
                      }
                    }
                  }
                  if (bias.requires_grad()) {
                    auto gb = bias.ensure_grad();
                    for (std::size_t b = 0; b < B; ++b) {
                      for (std::size_t l = 0; l < L; ++l) gb[l] += go[b * L + l];
                    }
                  }
                });
  }
  return out;
}

Tensor softmax_cross_entropy(GradientTape& tape, const Tensor& logits,
                             std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const std::size_t B = logits.dim(0), L = logits.dim(1);
  if (labels.size() != B) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for a batch of " + std::to_string(B));
  }
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= L) {
      throw IndexError("label " + std::to_string(labels[b]) + " at row " +
                       std::to_string(b) + " outside [0, " + std::to_string(L) +
                       ")");
    }
  }
  auto z = logits.values();
  auto probs = std::make_shared<std::vector<real>>(B * L);
  real total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const real* row = z.data() + b * L;
    const real m = *std::max_element(row, row + L);
    real denom = 0.0;
    for (std::size_t l = 0; l < L; ++l) denom += std::exp(row[l] - m);
    const real log_denom = std::log(denom);
    for (std::size_t l = 0; l < L; ++l) {
      (*probs)[b * L + l] = std::exp(row[l] - m - log_denom);
    }
    total += log_denom - (row[labels[b]] - m);
  }
  Tensor out = Tensor::scalar(total / static_cast<real>(B));
  if (tape.should_record({&logits})) {
    std::vector<int> labs(labels.begin(), labels.end());
    tape.record("softmax_cross_entropy", {logits}, out,
                [logits = logits, probs, labs = std::move(labs), B, L](std::span<const real> go) mutable {
                  auto gz = logits.ensure_grad();
                  const real s = go[0] / static_cast<real>(B);
                  for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t l = 0; l < L; ++l) {
                      const real onehot = static_cast<int>(l) == labs[b] ? 1.0 : 0.0;
                      gz[b * L + l] += s * ((*probs)[b * L + l] - onehot);
                    }
                  }
                });
  }
  return out;
}

Tensor broadcast_mul(GradientTape& tape, const Tensor& images,
                     const Tensor& map) {
  require_rank(images, 4, "broadcast_mul images");
  require_rank(map, 4, "broadcast_mul map");
  if (map.dim(0) != 1 || map.dim(1) != 1 || map.dim(2) != images.dim(2) ||
      map.dim(3) != images.dim(3)) {
    throw DimensionError("broadcast_mul: map " + shape_to_string(map.shape()) +
                         " does not match images " +
                         shape_to_string(images.shape()));
  }
  const std::size_t planes = images.dim(0) * images.dim(1);
  const std::size_t plane = images.dim(2) * images.dim(3);
  Tensor out(images.shape());
  auto xv = images.values();
  auto mv = map.values();
  auto y = out.values();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < plane; ++i) y[p * plane + i] = xv[p * plane + i] * mv[i];
  }
  if (tape.should_record({&images, &map})) {
    tape.record("broadcast_mul", {images, map}, out,
                [images = images, map = map, planes, plane](std::span<const real> go) mutable {
                  if (images.requires_grad()) {
                    auto gx = images.ensure_grad();
                    auto mv = map.values();
                    for (std::size_t p = 0; p < planes; ++p) {
                      for (std::size_t i = 0; i < plane; ++i) {
                        gx[p * plane + i] += go[p * plane + i] * mv[i];
                      }
                    }
                  }
                  if (map.requires_grad()) {
                    auto gm = map.ensure_grad();
                    auto xv = images.values();
                    for (std::size_t p = 0; p < planes; ++p) {
                      for (std::size_t i = 0; i < plane; ++i) {
                        gm[i] += go[p * plane + i] * xv[p * plane + i];
                      }
                    }
                  }
                });
  }
  return out;
}

Tensor concat_channels(GradientTape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_channels of nothing");
  for (const auto& p : parts) require_rank(p, 4, "concat_channels part");
  const std::size_t B = parts[0].dim(0), W = parts[0].dim(2), H = parts[0].dim(3);
  std::size_t C = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != B || p.dim(2) != W || p.dim(3) != H) {
      throw DimensionError("concat_channels: incompatible part " +
                           shape_to_string(p.shape()));
    }
    C += p.dim(1);
  }
  const std::size_t plane = W * H;
  Tensor out({B, C, W, H});
  auto y = out.values();
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      const std::size_t n = p.dim(1) * plane;
      auto src = p.values().subspan(b * n, n);
      std::copy(src.begin(), src.end(), y.begin() + static_cast<long>((b * C + c0) * plane));
      c0 += p.dim(1);
    }
  }
  if (tape.should_record(std::span<const Tensor>(parts))) {
    tape.record("concat_channels", parts, out,
                [parts = parts, B, C, plane](std::span<const real> go) mutable {
                  std::size_t c0 = 0;
                  for (auto& p : parts) {
                    const std::size_t n = p.dim(1) * plane;
                    if (p.requires_grad()) {
                      auto gp = p.ensure_grad();
                      for (std::size_t b = 0; b < B; ++b) {
                        for (std::size_t i = 0; i < n; ++i) {
                          gp[b * n + i] += go[(b * C + c0) * plane + i];
                        }
                      }
                    }
                    c0 += p.dim(1);
                  }
                });
  }
  return out;
}

Tensor l1_mean(GradientTape& tape, const Tensor& x) {
  auto v = x.values();
  real total = 0.0;
  for (real e : v) total += std::abs(e);
  const real n = static_cast<real>(v.size());
  Tensor out = Tensor::scalar(total / n);
  if (tape.should_record({&x})) {
    tape.record("l1_mean", {x}, out, [x = x, n](std::span<const real> go) mutable {
      auto v = x.values();
      auto gx = x.ensure_grad();
      const real s = go[0] / n;
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (v[i] > 0.0) {
          gx[i] += s;
        } else if (v[i] < 0.0) {
          gx[i] -= s;
        }
      }
    });
  }
  return out;
}

Tensor sum(GradientTape& tape, const Tensor& x) {
  real total = 0.0;
  for (real e : x.values()) total += e;
  Tensor out = Tensor::scalar(total);
  if (tape.should_record({&x})) {
    tape.record("sum", {x}, out, [x = x](std::span<const real> go) mutable {
      for (auto& g : x.ensure_grad()) g += go[0];
    });
  }
  return out;
}

Tensor mean(GradientTape& tape, const Tensor& x) {
  real total = 0.0;
  for (real e : x.values()) total += e;
  const real n = static_cast<real>(x.numel());
  Tensor out = Tensor::scalar(total / n);
  if (tape.should_record({&x})) {
    tape.record("mean", {x}, out, [x = x, n](std::span<const real> go) mutable {
      for (auto& g : x.ensure_grad()) g += go[0] / n;
    });
  }
  return out;
}

Tensor add(GradientTape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto av = a.values(), bv = b.values();
  auto y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  if (tape.should_record({&a, &b})) {
    tape.record("add", {a, b}, out, [a = a, b = b](std::span<const real> go) mutable {
      accumulate(a, go);
      accumulate(b, go);
    });
  }
  return out;
}

Tensor mul(GradientTape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto av = a.values(), bv = b.values();
  auto y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  if (tape.should_record({&a, &b})) {
    tape.record("mul", {a, b}, out, [a = a, b = b](std::span<const real> go) mutable {
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        auto bv = b.values();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        auto av = a.values();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(GradientTape& tape, const Tensor& x, real factor) {
  Tensor out(x.shape());
  auto xv = x.values();
  auto y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * factor;
  if (tape.should_record({&x})) {
    tape.record("scale", {x}, out, [x = x, factor](std::span<const real> go) mutable {
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * factor;
    });
  }
  return out;
}

}  // namespace gsa
