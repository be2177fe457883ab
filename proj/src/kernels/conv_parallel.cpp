#include "gsa/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gsa::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

namespace {

struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;  // exclusive
};

// Output positions o in [0, out_extent) whose source o*stride + tap - padding
// falls inside [0, extent).
Range valid_outputs(std::size_t extent, std::size_t out_extent,
                    std::size_t tap, std::size_t stride, std::size_t padding) {
  const long p = static_cast<long>(padding) - static_cast<long>(tap);
  const long s = static_cast<long>(stride);
  long lo = p > 0 ? (p + s - 1) / s : 0;
  long hi = (static_cast<long>(extent) - 1 + p) / s + 1;
  if (static_cast<long>(extent) - 1 + p < 0) hi = 0;
  hi = std::min(hi, static_cast<long>(out_extent));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const real> in,
                    std::span<const real> weight, std::span<const real> bias,
                    std::span<real> out) {
  const std::size_t ow = g.out_width(), oh = g.out_height(), k = g.kernel;
  const std::size_t s = g.stride, pad = g.padding;
  const std::size_t in_plane = g.width * g.height, out_plane = ow * oh;
  const long planes = static_cast<long>(g.batch * g.out_channels);

#pragma omp parallel for schedule(static)
  for (long bo = 0; bo < planes; ++bo) {
    const std::size_t b = static_cast<std::size_t>(bo) / g.out_channels;
    const std::size_t o = static_cast<std::size_t>(bo) % g.out_channels;
    real* op = out.data() + static_cast<std::size_t>(bo) * out_plane;
    std::fill(op, op + out_plane, bias[o]);
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      const real* ip = in.data() + (b * g.in_channels + c) * in_plane;
      const real* wp = weight.data() + (o * g.in_channels + c) * k * k;
      for (std::size_t i = 0; i < k; ++i) {
        const Range xr = valid_outputs(g.width, ow, i, s, pad);
        for (std::size_t j = 0; j < k; ++j) {
          const Range yr = valid_outputs(g.height, oh, j, s, pad);
          const real w = wp[i * k + j];
          for (std::size_t ox = xr.lo; ox < xr.hi; ++ox) {
            const real* irow = ip + (ox * s + i - pad) * g.height;
            real* orow = op + ox * oh;
            if (s == 1) {
              const real* src = irow + (yr.lo + j - pad);
              real* dst = orow + yr.lo;
              const std::size_t n = yr.hi - yr.lo;
              for (std::size_t t = 0; t < n; ++t) dst[t] += src[t] * w;
            } else {
              for (std::size_t oy = yr.lo; oy < yr.hi; ++oy) {
                orow[oy] += irow[oy * s + j - pad] * w;
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const real> grad_out,
                           std::span<const real> weight,
                           std::span<real> grad_in) {
  const std::size_t ow = g.out_width(), oh = g.out_height(), k = g.kernel;
  const std::size_t s = g.stride, pad = g.padding;
  const std::size_t in_plane = g.width * g.height, out_plane = ow * oh;
  const long planes = static_cast<long>(g.batch * g.in_channels);

#pragma omp parallel for schedule(static)
  for (long bc = 0; bc < planes; ++bc) {
    const std::size_t b = static_cast<std::size_t>(bc) / g.in_channels;
    const std::size_t c = static_cast<std::size_t>(bc) % g.in_channels;
    real* gp = grad_in.data() + static_cast<std::size_t>(bc) * in_plane;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const real* gop = grad_out.data() + (b * g.out_channels + o) * out_plane;
      const real* wp = weight.data() + (o * g.in_channels + c) * k * k;
      for (std::size_t i = 0; i < k; ++i) {
        const Range xr = valid_outputs(g.width, ow, i, s, pad);
        for (std::size_t j = 0; j < k; ++j) {
          const Range yr = valid_outputs(g.height, oh, j, s, pad);
          const real w = wp[i * k + j];
          for (std::size_t ox = xr.lo; ox < xr.hi; ++ox) {
            real* grow = gp + (ox * s + i - pad) * g.height;
            const real* gorow = gop + ox * oh;
            if (s == 1) {
              real* dst = grow + (yr.lo + j - pad);
              const real* src = gorow + yr.lo;
              const std::size_t n = yr.hi - yr.lo;
              for (std::size_t t = 0; t < n; ++t) dst[t] += src[t] * w;
            } else {
              for (std::size_t oy = yr.lo; oy < yr.hi; ++oy) {
                grow[oy * s + j - pad] += gorow[oy] * w;
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
  const std::size_t s = g.stride, pad = g.padding;
  const std::size_t in_plane = g.width * g.height, out_plane = ow * oh;
  const long pairs = static_cast<long>(g.out_channels * g.in_channels);

#pragma omp parallel for schedule(static)
  for (long oc = 0; oc < pairs; ++oc) {
    const std::size_t o = static_cast<std::size_t>(oc) / g.in_channels;
    const std::size_t c = static_cast<std::size_t>(oc) % g.in_channels;
    real* gw = grad_weight.data() + static_cast<std::size_t>(oc) * k * k;
    for (std::size_t i = 0; i < k; ++i) {
      const Range xr = valid_outputs(g.width, ow, i, s, pad);
      for (std::size_t j = 0; j < k; ++j) {
        const Range yr = valid_outputs(g.height, oh, j, s, pad);
        real acc = 0.0;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const real* ip = in.data() + (b * g.in_channels + c) * in_plane;
          const real* gop = grad_out.data() + (b * g.out_channels + o) * out_plane;
          for (std::size_t ox = xr.lo; ox < xr.hi; ++ox) {
            const real* irow = ip + (ox * s + i - pad) * g.height;
            const real* gorow = gop + ox * oh;
            if (s == 1) {
              const real* src = irow + (yr.lo + j - pad);
              const real* go = gorow + yr.lo;
              const std::size_t n = yr.hi - yr.lo;
              for (std::size_t t = 0; t < n; ++t) acc += go[t] * src[t];
            } else {
              for (std::size_t oy = yr.lo; oy < yr.hi; ++oy) {
                acc += gorow[oy] * irow[oy * s + j - pad];
              }
            }
          }
        }
        gw[i * k + j] += acc;
      }
    }
  }
}

void conv2d_backward_bias(const ConvGeometry& g, std::span<const real> grad_out,
                          std::span<real> grad_bias) {
  const std::size_t plane = g.out_width() * g.out_height();
  const long channels = static_cast<long>(g.out_channels);

#pragma omp parallel for schedule(static)
  for (long o = 0; o < channels; ++o) {
    real acc = 0.0;
    for (std::size_t b = 0; b < g.batch; ++b) {
      const real* gop =
          grad_out.data() + (b * g.out_channels + static_cast<std::size_t>(o)) * plane;
      for (std::size_t p = 0; p < plane; ++p) acc += gop[p];
    }
    grad_bias[static_cast<std::size_t>(o)] += acc;
  }
}

}  // namespace parallel
}  // namespace gsa::kernels
