// SPDX-License-Identifier: Apache-2.0
//
// Protective reconstruction: back up, probe, detect filters whose pruned
// weights regrew abnormally, and restore them.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psap/model.hpp"
#include "psap/optim.hpp"
#include "psap/policy.hpp"
#include "psap/step.hpp"

namespace psap {

/// Snapshot of every maskable unit, taken right before masks are applied.
struct WeightBackup {
  int epoch = 0;
  std::vector<std::string> layers;
  std::vector<Tensor> weights;
  std::vector<Tensor> gamma;
  std::vector<Tensor> beta;
  std::vector<Tensor> running_mean;
  std::vector<Tensor> running_var;
  bool consumed = false;
};

WeightBackup backup_weights(const Model& model, int epoch = 0);

/// Writes every snapshot tensor back (all filters).
void restore_backup(Model& model, const WeightBackup& backup);

struct AbnormalReport {
  std::vector<std::string> layers;
  std::vector<std::vector<std::size_t>> abnormal;  // sorted filter indices
  std::vector<std::vector<double>> norms;          // per filter, the detection statistic
  std::vector<double> threshold;

  std::size_t total() const;
  std::size_t count(std::size_t layer) const { return abnormal.at(layer).size(); }
};

/// One ordinary training step on `batch`; pruned filters are not frozen.
StepResult probe_step(Model& model, const Batch& batch, SGDState& optimizer,
                      std::vector<std::vector<double>>* filter_grad_norms = nullptr);

struct DetectOptions {
  DetectVariant variant = DetectVariant::kWeightNorm;
  ThresholdPool pool = ThresholdPool::kAll;
  /// Per-filter probe gradient norms; required by the grad-norm variant.
  const std::vector<std::vector<double>>* grad_norms = nullptr;
};

/// Per maskable unit: statistic = filter L2 norm (or gradient norm), threshold
/// = its mean over the pool, abnormal = pruned filters strictly above it.
AbnormalReport detect_abnormal(const Model& model, const DetectOptions& options = {});

/// Applies the reconstruction path to the reported filters and marks them
/// kept. Throws ContractError for a consumed backup or one taken from a
/// different model structure.
void reconstruct(Model& model, WeightBackup& backup, const AbnormalReport& report,
                 ReconMode mode, SGDState* optimizer = nullptr, std::uint64_t seed = 0);

}  // namespace psap
