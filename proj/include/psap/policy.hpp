// SPDX-License-Identifier: Apache-2.0
//
// Self-adaptive pruning-ratio policy and compression accounting.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "psap/model.hpp"
#include "psap/pruning.hpp"

namespace psap {

enum class ReconMode { kReload, kReactivate, kReinitialize, kNone };
enum class DetectVariant { kWeightNorm, kGradNorm };
enum class ThresholdPool { kAll, kPruned };
enum class TargetMetric { kParams, kFlops };

std::string_view recon_mode_name(ReconMode m);
ReconMode parse_recon_mode(std::string_view s);
std::string_view detect_variant_name(DetectVariant v);
DetectVariant parse_detect_variant(std::string_view s);
std::string_view threshold_pool_name(ThresholdPool p);
ThresholdPool parse_threshold_pool(std::string_view s);
std::string_view target_metric_name(TargetMetric t);
TargetMetric parse_target_metric(std::string_view s);

struct PruneConfig {
  double tau = 0.5;     // target fraction removed
  double s_min = 0.0;   // ratios are clamped to [0, 1 - s_min]
  double delta = 0.2;   // ratio increment
  double k_init = 0.1;  // ratio of every layer in the first search epoch
  ReconMode recon_mode = ReconMode::kReload;

  bool adaptive = true;                 // false: every layer fixed at uniform_ratio
  std::optional<double> uniform_ratio;  // unset: smallest ratio meeting tau
  TargetMetric target = TargetMetric::kParams;
  DetectVariant detect = DetectVariant::kWeightNorm;
  ThresholdPool threshold_pool = ThresholdPool::kAll;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

struct CompressionReport {
  double param_ratio_removed = 0.0;
  std::uint64_t flops_total = 0;    // dense multiply-accumulates per sample
  std::uint64_t flops_remaining = 0;
  double flops_removed_fraction = 0.0;
  std::vector<LayerSparsity> per_layer;

  /// The quantity compared against tau.
  double removed(TargetMetric m) const {
    return m == TargetMetric::kParams ? param_ratio_removed : flops_removed_fraction;
  }
};

/// k' = s + delta if s <= k, else s; clamped to [0, 1 - s_min].
double update_ratio(double s, double k, double delta, double s_min);

double clamp_ratio(double k, double s_min);

/// Parameter sparsity over maskable conv weights; FLOPs over every conv with
/// zero filters (and the input channels they feed, where a unit has a single
/// producer) discounted.
CompressionReport global_compression_ratio(const Model& model);

/// Structural compression implied by the current mask bits (pruned filters
/// counted as removed whether or not their weights have regrown).
CompressionReport mask_compression(const Model& model);

struct RatioPlan {
  std::vector<std::string> layers;
  std::vector<double> ratios;
  std::vector<double> measured_wsr;
};

/// Ratios for the coming pruning step. Epoch 1 assigns k_init; later epochs
/// apply update_ratio to each layer's current WSR and ratio. Non-adaptive
/// configs assign the uniform ratio every epoch. Does not modify the model.
RatioPlan update_all_ratios(const Model& model, const PruneConfig& config, int search_epoch,
                            double uniform_ratio);

/// Structural compression if each maskable unit lost floor(k_l * F_l) filters.
CompressionReport estimate_compression(const Model& model, const std::vector<double>& ratios);

/// Smallest ratio on a 0.01 grid whose uniform application reaches `target`
/// under `metric`; 1 - s_min if none does.
double uniform_ratio_for_target(const Model& model, double target, TargetMetric metric,
                                double s_min = 0.0);

}  // namespace psap
