#include "gsa/kernels.hpp"

namespace gsa::kernels::serial {

namespace {

// Input element at padded coordinate, zero outside the image.
inline bool source_index(const ConvGeometry& g, std::size_t ox, std::size_t oy,
                         std::size_t i, std::size_t j, std::size_t& ix,
                         std::size_t& iy) {
  const long x = static_cast<long>(ox * g.stride + i) - static_cast<long>(g.padding);
  const long y = static_cast<long>(oy * g.stride + j) - static_cast<long>(g.padding);
  if (x < 0 || y < 0 || x >= static_cast<long>(g.width) ||
      y >= static_cast<long>(g.height)) {
    return false;
  }
  ix = static_cast<std::size_t>(x);
  iy = static_cast<std::size_t>(y);
  return true;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const real> in,
                    std::span<const real> weight, std::span<const real> bias,
                    std::span<real> out) {
  const std::size_t ow = g.out_width(), oh = g.out_height(), k = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          real acc = bias[o];
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t i = 0; i < k; ++i) {
              for (std::size_t j = 0; j < k; ++j) {
                std::size_t ix, iy;
                if (!source_index(g, ox, oy, i, j, ix, iy)) continue;
                acc += in[((b * g.in_channels + c) * g.width + ix) * g.height + iy] *
                       weight[((o * g.in_channels + c) * k + i) * k + j];
              }
            }
          }
          out[((b * g.out_channels + o) * ow + ox) * oh + oy] = acc;
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const real> grad_out,
                           std::span<const real> weight,
                           std::span<real> grad_in) {
  const std::size_t ow = g.out_width(), oh = g.out_height(), k = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const real go = grad_out[((b * g.out_channels + o) * ow + ox) * oh + oy];
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t i = 0; i < k; ++i) {
              for (std::size_t j = 0; j < k; ++j) {
                std::size_t ix, iy;
                if (!source_index(g, ox, oy, i, j, ix, iy)) continue;
                grad_in[((b * g.in_channels + c) * g.width + ix) * g.height + iy] +=
                    go * weight[((o * g.in_channels + c) * k + i) * k + j];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g,
                            std::span<const real> grad_out,
                            std::span<const real> in,
                            std::span<real> grad_weight) {
  const std::size_t ow = g.out_width(), oh = g.out_height(), k = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const real go = grad_out[((b * g.out_channels + o) * ow + ox) * oh + oy];
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t i = 0; i < k; ++i) {
              for (std::size_t j = 0; j < k; ++j) {
                std::size_t ix, iy;
                if (!source_index(g, ox, oy, i, j, ix, iy)) continue;
                grad_weight[((o * g.in_channels + c) * k + i) * k + j] +=
                    go * in[((b * g.in_channels + c) * g.width + ix) * g.height + iy];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_bias(const ConvGeometry& g, std::span<const real> grad_out,
                          std::span<real> grad_bias) {
  const std::size_t plane = g.out_width() * g.out_height();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t p = 0; p < plane; ++p) {
        grad_bias[o] += grad_out[(b * g.out_channels + o) * plane + p];
      }
    }
  }
}

}  // namespace gsa::kernels::serial
