// SPDX-License-Identifier: Apache-2.0
#include "psap/policy.hpp"

#include <algorithm>
#include <cmath>

#include "psap/errors.hpp"

namespace psap {

std::string_view recon_mode_name(ReconMode m) {
  switch (m) {
    case ReconMode::kReload:
      return "reload";
    case ReconMode::kReactivate:
      return "reactivate";
    case ReconMode::kReinitialize:
      return "reinit";
    case ReconMode::kNone:
      return "none";
  }
  return "none";
}

ReconMode parse_recon_mode(std::string_view s) {
  if (s == "reload") return ReconMode::kReload;
  if (s == "reactivate") return ReconMode::kReactivate;
  if (s == "reinit" || s == "reinitialize") return ReconMode::kReinitialize;
  if (s == "none") return ReconMode::kNone;
  throw ConfigError("unknown reconstruction mode '" + std::string(s) +
                    "' (expected reload, reactivate, reinit or none)");
}

std::string_view detect_variant_name(DetectVariant v) {
  return v == DetectVariant::kWeightNorm ? "weight-norm" : "grad-norm";
}

DetectVariant parse_detect_variant(std::string_view s) {
  if (s == "weight-norm") return DetectVariant::kWeightNorm;
  if (s == "grad-norm") return DetectVariant::kGradNorm;
  throw ConfigError("unknown detection variant '" + std::string(s) +
                    "' (expected weight-norm or grad-norm)");
}

std::string_view threshold_pool_name(ThresholdPool p) {
  return p == ThresholdPool::kAll ? "all" : "pruned";
}

ThresholdPool parse_threshold_pool(std::string_view s) {
  if (s == "all") return ThresholdPool::kAll;
  if (s == "pruned") return ThresholdPool::kPruned;
  throw ConfigError("unknown threshold pool '" + std::string(s) + "' (expected all or pruned)");
}

std::string_view target_metric_name(TargetMetric t) {
  return t == TargetMetric::kParams ? "params" : "flops";
}

TargetMetric parse_target_metric(std::string_view s) {
  if (s == "params") return TargetMetric::kParams;
  if (s == "flops") return TargetMetric::kFlops;
  throw ConfigError("unknown target metric '" + std::string(s) + "' (expected params or flops)");
}

void PruneConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
  if (!(s_min >= 0.0 && s_min < 1.0)) throw ConfigError("s_min must lie in [0, 1)");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!(k_init > 0.0 && k_init < 1.0)) throw ConfigError("k_init must lie in (0, 1)");
  if (uniform_ratio && !(*uniform_ratio >= 0.0 && *uniform_ratio <= 1.0)) {
    throw ConfigError("uniform ratio must lie in [0, 1]");
  }
}

double clamp_ratio(double k, double s_min) { return std::clamp(k, 0.0, 1.0 - s_min); }

double update_ratio(double s, double k, double delta, double s_min) {
  const double next = s <= k ? s + delta : s;
  return clamp_ratio(next, s_min);
}

namespace {

// zero_filters[u] counts all-zero filters of unit u (all units, registry order).
CompressionReport account(const Model& model, const std::vector<std::size_t>& zero_filters,
                          std::size_t nonzero_params, std::size_t total_params) {
  CompressionReport r;
  const auto& units = model.units();
  std::uint64_t remaining = 0;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto* unit = units[u];
    const auto& w = unit->conv().weights.value;
    const std::uint64_t spatial = static_cast<std::uint64_t>(unit->out_h()) * unit->out_w() *
                                  w.dim(2) * w.dim(3);
    const std::uint64_t in = w.dim(1);
    const std::uint64_t out = w.dim(0);
    std::uint64_t in_kept = in;
    if (unit->producer() >= 0) {
      const auto p = static_cast<std::size_t>(unit->producer());
      in_kept -= std::min<std::uint64_t>(in, zero_filters[p]);
    }
    const std::uint64_t out_kept = out - zero_filters[u];
    r.flops_total += spatial * in * out;
    remaining += spatial * in_kept * out_kept;
  }
  r.flops_remaining = remaining;
  r.flops_removed_fraction =
      r.flops_total == 0 ? 0.0
                         : 1.0 - static_cast<double>(remaining) / static_cast<double>(r.flops_total);
  r.param_ratio_removed =
      total_params == 0
          ? 0.0
          : 1.0 - static_cast<double>(nonzero_params) / static_cast<double>(total_params);
  return r;
}

}  // namespace

CompressionReport global_compression_ratio(const Model& model) {
  const auto& units = model.units();
  std::vector<std::size_t> zero_filters(units.size(), 0);
  std::size_t nonzero = 0, total = 0;
  std::vector<LayerSparsity> per_layer;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto* unit = units[u];
    for (std::size_t f = 0; f < unit->out_filters(); ++f) {
      if (filter_is_zero(unit->conv(), f)) ++zero_filters[u];
    }
    if (!unit->maskable()) continue;
    auto s = measure_sparsity(*unit);
    nonzero += s.nonzero_count;
    total += s.total_count;
    per_layer.push_back(std::move(s));
  }
  auto r = account(model, zero_filters, nonzero, total);
  r.per_layer = std::move(per_layer);
  return r;
}

CompressionReport mask_compression(const Model& model) {
  const auto& units = model.units();
  std::vector<std::size_t> zero_filters(units.size(), 0);
  std::size_t nonzero = 0, total = 0;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto* unit = units[u];
    if (!unit->maskable()) continue;
    zero_filters[u] = unit->mask().pruned_count();
    const std::size_t len = unit->conv().filter_size();
    total += unit->out_filters() * len;
    nonzero += (unit->out_filters() - zero_filters[u]) * len;
  }
  return account(model, zero_filters, nonzero, total);
}

CompressionReport estimate_compression(const Model& model, const std::vector<double>& ratios) {
  const auto& units = model.units();
  std::vector<std::size_t> zero_filters(units.size(), 0);
  std::size_t nonzero = 0, total = 0, m = 0;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto* unit = units[u];
    if (!unit->maskable()) continue;
    if (m >= ratios.size()) throw ContractError("estimate_compression: too few ratios");
    zero_filters[u] = pruned_filter_count(ratios[m++], unit->out_filters());
    const std::size_t len = unit->conv().filter_size();
    total += unit->out_filters() * len;
    nonzero += (unit->out_filters() - zero_filters[u]) * len;
  }
  return account(model, zero_filters, nonzero, total);
}

RatioPlan update_all_ratios(const Model& model, const PruneConfig& config, int search_epoch,
                            double uniform_ratio) {
  if (search_epoch < 1) throw ContractError("search epochs are numbered from 1");
  RatioPlan plan;
  for (const auto* unit : model.maskable_units()) {
    const double s = measure_sparsity(*unit).wsr;
    double k;
    if (!config.adaptive) {
      k = clamp_ratio(uniform_ratio, config.s_min);
    } else if (search_epoch == 1) {
      k = clamp_ratio(config.k_init, config.s_min);
    } else {
      k = update_ratio(s, unit->ratio(), config.delta, config.s_min);
    }
    plan.layers.push_back(unit->name());
    plan.ratios.push_back(k);
    plan.measured_wsr.push_back(s);
  }
  return plan;
}

double uniform_ratio_for_target(const Model& model, double target, TargetMetric metric,
                                double s_min) {
  const std::size_t layers = model.maskable_units().size();
  const double cap = 1.0 - s_min;
  for (int step = 0; step <= 100; ++step) {
    const double k = std::min(cap, step / 100.0);
    const auto r = estimate_compression(model, std::vector<double>(layers, k));
    if (r.removed(metric) >= target) return k;
    if (k >= cap) break;
  }
  return cap;
}

}  // namespace psap
