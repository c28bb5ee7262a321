// SPDX-License-Identifier: Apache-2.0
//
// Raw convolution kernels over flat NCHW buffers. The `parallel` versions
// distribute output rows over OpenMP threads; every output element is still
// produced by exactly one thread with a fixed summation order, so results do
// not depend on the thread count. The `reference` versions are the plain
// nested loops and are kept as the test oracle.
#pragma once

#include <cstddef>
#include <span>

#include "psap/tensor.hpp"

namespace psap::kernels {

struct ConvGeometry {
  std::size_t n = 0, c = 0, h = 0, w = 0;  // input
  std::size_t f = 0, kh = 0, kw = 0;       // filters
  std::size_t stride = 1, pad = 0;
  std::size_t oh = 0, ow = 0;  // output

  std::size_t input_size() const { return n * c * h * w; }
  std::size_t weight_size() const { return f * c * kh * kw; }
  std::size_t output_size() const { return n * f * oh * ow; }
};

/// Validates shapes and computes the output extent. Throws ShapeError.
ConvGeometry conv_geometry(const Shape& input, const Shape& weights, std::size_t stride,
                           std::size_t pad);

namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weights, std::span<double> output);

/// Accumulates into `dweights`; overwrites `dinput` unless it is empty.
void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weights, std::span<const double> doutput,
                     std::span<double> dinput, std::span<double> dweights);

}  // namespace parallel

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weights, std::span<double> output);

void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weights, std::span<const double> doutput,
                     std::span<double> dinput, std::span<double> dweights);

}  // namespace reference

}  // namespace psap::kernels
