#pragma once

// Differentiable tensor operations. Every op computes its forward value
// eagerly and, when the tape is recording and some input requires a
// gradient, appends its backward rule to the tape.

#include <span>
#include <vector>

#include "gsa/tape.hpp"
#include "gsa/tensor.hpp"

namespace gsa {

// input B x Cin x W x H, kernel Cout x Cin x k x k (k odd), bias Cout.
// Zero padding; W' = (W + 2*padding - k) / stride + 1.
Tensor conv2d(GradientTape& tape, const Tensor& input, const Tensor& kernel,
              const Tensor& bias, std::size_t stride, std::size_t padding);

Tensor relu(GradientTape& tape, const Tensor& x);

// Evaluated as exp(x)/(1+exp(x)) for negative x so large |x| stays finite.
Tensor sigmoid(GradientTape& tape, const Tensor& x);

// Non-overlapping window x window max pool over axes 2 and 3 of a rank-4
// tensor. Ties route the gradient to the first maximum in row-major order.
Tensor max_pool2d(GradientTape& tape, const Tensor& x, std::size_t window);

// Same values, new shape.
Tensor reshape(GradientTape& tape, const Tensor& x, Shape shape);

// x B x D, weight L x D, bias L -> B x L.
Tensor linear(GradientTape& tape, const Tensor& x, const Tensor& weight,
              const Tensor& bias);

// Mean over the batch of -log softmax(logits)[label]. Throws IndexError for
// labels outside [0, L).
Tensor softmax_cross_entropy(GradientTape& tape, const Tensor& logits,
                             std::span<const int> labels);

// images B x C x W x H times map 1 x 1 x W x H, broadcast over B and C.
Tensor broadcast_mul(GradientTape& tape, const Tensor& images,
                     const Tensor& map);

// Channel-wise concatenation of rank-4 tensors sharing B, W and H.
Tensor concat_channels(GradientTape& tape, const std::vector<Tensor>& parts);

// (1/n) * sum |x_i|, with sign(0) = 0 in the backward rule.
Tensor l1_mean(GradientTape& tape, const Tensor& x);

Tensor sum(GradientTape& tape, const Tensor& x);
Tensor mean(GradientTape& tape, const Tensor& x);

// Elementwise, identical shapes.
Tensor add(GradientTape& tape, const Tensor& a, const Tensor& b);
Tensor mul(GradientTape& tape, const Tensor& a, const Tensor& b);
Tensor scale(GradientTape& tape, const Tensor& x, real factor);

}  // namespace gsa
