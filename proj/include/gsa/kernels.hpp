#pragma once

// Raw 2-D convolution kernels over row-major B x C x W x H buffers.
//
// Two implementations share one interface. `serial` is a direct transcription
// of the convolution sum, kept as the reference the tests and benchmark
// compare against. `parallel` reorders the loops so the innermost one runs
// along contiguous memory and splits independent output planes across OpenMP
// threads. Every output element is reduced in a fixed order inside a single
// thread, so `parallel` results do not depend on the thread count.

#include <cstddef>
#include <span>

#include "gsa/tensor.hpp"

namespace gsa::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t width = 1;   // input extent along axis 2
  std::size_t height = 1;  // input extent along axis 3
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_width() const {
    return (width + 2 * padding - kernel) / stride + 1;
  }
  std::size_t out_height() const {
    return (height + 2 * padding - kernel) / stride + 1;
  }
  std::size_t input_size() const { return batch * in_channels * width * height; }
  std::size_t kernel_size() const {
    return out_channels * in_channels * kernel * kernel;
  }
  std::size_t output_size() const {
    return batch * out_channels * out_width() * out_height();
  }
};

namespace serial {

// out = conv(in, weight) + bias. Overwrites `out`.
void conv2d_forward(const ConvGeometry& g, std::span<const real> in,
                    std::span<const real> weight, std::span<const real> bias,
                    std::span<real> out);
// Accumulates d/d(in) into grad_in.
void conv2d_backward_input(const ConvGeometry& g, std::span<const real> grad_out,
                           std::span<const real> weight,
                           std::span<real> grad_in);
// Accumulates d/d(weight) into grad_weight.
void conv2d_backward_weight(const ConvGeometry& g,
                            std::span<const real> grad_out,
                            std::span<const real> in,
                            std::span<real> grad_weight);
// Accumulates d/d(bias) into grad_bias.
void conv2d_backward_bias(const ConvGeometry& g, std::span<const real> grad_out,
                          std::span<real> grad_bias);

}  // namespace serial

namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const real> in,
                    std::span<const real> weight, std::span<const real> bias,
                    std::span<real> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const real> grad_out,
                           std::span<const real> weight,
                           std::span<real> grad_in);
void conv2d_backward_weight(const ConvGeometry& g,
                            std::span<const real> grad_out,
                            std::span<const real> in,
                            std::span<real> grad_weight);
void conv2d_backward_bias(const ConvGeometry& g, std::span<const real> grad_out,
                          std::span<real> grad_bias);

}  // namespace parallel

// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace gsa::kernels
