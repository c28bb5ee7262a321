// SPDX-License-Identifier: Apache-2.0
#include "psap/optim.hpp"

#include <cmath>

#include "psap/errors.hpp"

namespace psap {

StepStats gradient_stats(std::span<Parameter* const> params) {
  StepStats s;
  double sq = 0.0;
  for (const auto* p : params) {
    if (!p->value.has_grad()) continue;
    for (double g : p->value.grad()) {
      sq += g * g;
      s.max_abs_grad = std::max(s.max_abs_grad, std::abs(g));
    }
  }
  s.grad_norm = std::sqrt(sq);
  return s;
}

StepStats sgd_step(std::span<Parameter* const> params, SGDState& state) {
  StepStats stats = gradient_stats(params);
  if (state.clip_max_norm && stats.grad_norm > *state.clip_max_norm) {
    stats.clip_scale = *state.clip_max_norm / stats.grad_norm;
  }

  std::size_t slots = 0;
  for (const auto* p : params) slots = std::max(slots, p->index + 1);
  if (state.velocity.size() < slots) state.velocity.resize(slots);

  for (auto* p : params) {
    if (!p->value.has_grad()) continue;
    Tensor& v = state.velocity[p->index];
    if (v.empty()) {
      v = Tensor(p->value.shape(), 0.0);
    } else if (v.shape() != p->value.shape()) {
      throw ContractError("velocity shape for " + p->name + " does not mirror the parameter");
    }
    auto w = p->value.data();
    auto g = p->value.grad();
    auto vel = v.data();
    const double decay = p->decay ? state.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * stats.clip_scale;
      if (!std::isfinite(gi)) {
        throw NumericalError("non-finite gradient in parameter " + p->name + " at index " +
                             std::to_string(i));
      }
      vel[i] = state.momentum * vel[i] + (gi + decay * w[i]);
      w[i] -= state.learning_rate * vel[i];
    }
  }
  return stats;
}

}  // namespace psap
