// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "psap/tensor.hpp"

namespace psap {

inline constexpr double kDefaultClipNorm = 5.0;

/// SGD with momentum, coupled weight decay and optional global-norm clipping.
/// velocity[i] belongs to the parameter whose Parameter::index is i.
struct SGDState {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::optional<double> clip_max_norm = kDefaultClipNorm;
  std::vector<Tensor> velocity;
};

struct StepStats {
  double grad_norm = 0.0;     // global L2 norm before clipping
  double max_abs_grad = 0.0;  // largest |g| before clipping
  double clip_scale = 1.0;
};

/// Global gradient statistics without touching anything.
StepStats gradient_stats(std::span<Parameter* const> params);

/// v <- momentum*v + (scale*g + weight_decay*w); w <- w - lr*v, where
/// scale = min(1, clip/||g||). Throws NumericalError naming the parameter
/// if a clipped gradient is non-finite.
StepStats sgd_step(std::span<Parameter* const> params, SGDState& state);

}  // namespace psap
