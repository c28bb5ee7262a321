// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations used by the layers. Forward functions return a
// new tensor; backward functions accumulate into parameter gradients and
// return the gradient with respect to the input.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "psap/tensor.hpp"

namespace psap {

struct ConvParams {
  Parameter weights;  // [out_filters, in_channels, kh, kw]
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_filters() const { return weights.value.dim(0); }
  std::size_t in_channels() const { return weights.value.dim(1); }
  std::size_t filter_size() const { return weights.value.size() / out_filters(); }
};

inline constexpr double kDefaultBnEps = 1e-5;
inline constexpr double kDefaultBnMomentum = 0.1;

struct BNParams {
  Parameter gamma;  // [C]
  Parameter beta;   // [C]
  Tensor running_mean;
  Tensor running_var;
  double eps = kDefaultBnEps;
  double momentum = kDefaultBnMomentum;

  static BNParams identity(std::size_t channels, double eps = kDefaultBnEps);
  std::size_t channels() const { return gamma.value.size(); }
};

/// Values retained by a training-mode batchnorm forward for the backward pass.
struct BNCache {
  Shape shape;
  std::vector<double> mean;  // per channel
  std::vector<double> var;   // biased, per channel
  Tensor centered;           // y - mean
};

Tensor conv2d_forward(const Tensor& input, const ConvParams& params);
/// Accumulates dL/dW into params.weights; returns dL/dinput.
Tensor conv2d_backward(const Tensor& input, ConvParams& params, const Tensor& grad_out);

/// z = beta + gamma * (y - mu) / sqrt(var + eps), per channel over N*H*W.
/// Training mode uses (and caches) batch statistics and updates the running
/// statistics; inference mode uses the running statistics.
Tensor batchnorm_forward(const Tensor& y, BNParams& params, bool training,
                         BNCache* cache = nullptr);

/// Full three-term batchnorm gradient: direct 1/sqrt(var+eps) term, the
/// coupling through the batch mean, and the coupling through the batch
/// variance. Accumulates dgamma, dbeta; returns dL/dy.
Tensor batchnorm_backward(const Tensor& upstream, BNParams& params,
                          const std::optional<BNCache>& cache);

Tensor relu_forward(const Tensor& x);
/// Derivative at exactly 0 is 0.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

/// [N,C,H,W] -> [N,C]
Tensor global_avg_pool_forward(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out);

struct LinearParams {
  Parameter weights;  // [out, in]
  Parameter bias;     // [out]
};

/// [N,in] -> [N,out]
Tensor linear_forward(const Tensor& x, const LinearParams& params);
Tensor linear_backward(const Tensor& x, LinearParams& params, const Tensor& grad_out);

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // dL/dlogits
  std::size_t correct = 0;
};

/// Mean softmax cross-entropy over the batch.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace psap
