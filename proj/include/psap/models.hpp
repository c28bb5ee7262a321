// SPDX-License-Identifier: Apache-2.0
//
// Model builders.
#pragma once

#include <cstddef>

#include "psap/model.hpp"
#include "psap/random.hpp"

namespace psap {

/// Standard deviation of the fan-in scaled normal initializer.
double kaiming_std(std::size_t fan_in);

/// Throws ConfigError for degenerate specs.
void validate_model_spec(const ModelSpec& spec);

/// Builds and initializes the network described by `spec`.
///
///  cnn_small    conv1 (w) -> conv2 (2w, stride 2) -> conv3 (4w, stride 2),
///               each conv+bn+relu, then global pooling and a linear head.
///  resnet_tiny  stem + three stages of `blocks` basic residual blocks
///               (widths w, 2w, 4w), global pooling and a linear head.
///  mlp_probe    flatten + linear head.
///
/// Conv weights are drawn from N(0, kaiming_std(fan_in)) with a stream per
/// parameter derived from spec.seed; the head uses N(0, 1/sqrt(in)) and a
/// zero bias. Throws ConfigError for degenerate specs.
Model build_model(const ModelSpec& spec);

/// Re-draws one filter of a conv unit from its initializer distribution.
void reinitialize_filter(ConvBN& unit, std::size_t filter, Rng& rng);

}  // namespace psap
