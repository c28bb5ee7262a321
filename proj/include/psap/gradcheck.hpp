// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checking.
#pragma once

#include <functional>
#include <span>
#include <string>

#include "psap/layers.hpp"

namespace psap {

/// Scalar loss of a layer output. Writes dL/d(out) into `grad`.
using LossFn = std::function<double(const Tensor& out, Tensor& grad)>;

/// sum(out^2) / 2
LossFn sum_squares_loss();
/// Mean softmax cross-entropy; `out` must be [N, classes].
LossFn cross_entropy_loss(std::vector<int> labels);
/// sum(out * weights) for a fixed random projection.
LossFn projection_loss(Tensor weights);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst;  // "<param>[i]" or "input[i]"
  std::size_t checked = 0;
};

/// Compares analytic gradients (training-mode forward + backward) of every
/// parameter of `fragment` and of the input against central differences.
/// relative error = |a - n| / max(|a|, |n|, floor).
GradCheckResult gradient_check(Layer& fragment, const Tensor& input, const LossFn& loss,
                               double step = 1e-5, double floor = 1e-5);

}  // namespace psap
