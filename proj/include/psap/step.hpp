// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "psap/data.hpp"
#include "psap/model.hpp"
#include "psap/optim.hpp"

namespace psap {

struct StepResult {
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;
  StepStats stats;  // gradient statistics before clipping
};

struct StepOptions {
  /// Zero pruned-filter gradients before the update and re-apply masks after
  /// it (fine-tune mode).
  bool hard_masks = false;
  /// If set, receives the pre-clip L2 norm of each filter's weight gradient
  /// for every maskable unit.
  std::vector<std::vector<double>>* filter_grad_norms = nullptr;
};

/// forward, loss, backward and one optimizer step on `batch`.
/// Throws NumericalError on a non-finite loss.
StepResult train_step(Model& model, const Batch& batch, SGDState& optimizer,
                      const StepOptions& options = {});

/// Forward and backward only; gradients are left in the parameters.
StepResult compute_gradients(Model& model, const Batch& batch);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Inference-mode pass over the whole dataset without augmentation.
EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size);

}  // namespace psap
