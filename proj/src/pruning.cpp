// SPDX-License-Identifier: Apache-2.0
#include "psap/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "psap/errors.hpp"

namespace psap {

std::vector<double> filter_l2_norms(const ConvParams& params) {
  const std::size_t f = params.out_filters();
  const std::size_t len = params.filter_size();
  const auto w = params.weights.value.data();
  std::vector<double> norms(f);
  for (std::size_t i = 0; i < f; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < len; ++j) sq += w[i * len + j] * w[i * len + j];
    norms[i] = std::sqrt(sq);
  }
  return norms;
}

std::size_t pruned_filter_count(double k, std::size_t n) {
  // k*n like 0.29*100 lands a hair below the integer; absorb that.
  const double raw = std::clamp(k, 0.0, 1.0) * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::floor(raw + 1e-9)));
}

std::vector<std::size_t> select_prune_indices(std::span<const double> norms, double k) {
  const std::size_t count = pruned_filter_count(k, norms.size());
  std::vector<std::size_t> order(norms.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

FilterMask make_mask(const std::string& layer_id, std::size_t filters,
                     std::span<const std::size_t> pruned) {
  FilterMask m{layer_id, std::vector<bool>(filters, true)};
  for (auto i : pruned) m.kept.at(i) = false;
  return m;
}

void apply_mask(ConvBN& unit, const FilterMask& mask, SGDState* optimizer) {
  const std::size_t f = unit.out_filters();
  if (mask.kept.size() != f) {
    throw ContractError("mask for " + unit.name() + " has " + std::to_string(mask.kept.size()) +
                        " bits, layer has " + std::to_string(f) + " filters");
  }
  auto& conv = unit.conv();
  auto& bn = unit.bn();
  const std::size_t len = conv.filter_size();
  auto w = conv.weights.value.data();
  auto beta = bn.beta.value.data();
  auto rm = bn.running_mean.data();

  Tensor* vw = nullptr;
  Tensor* vb = nullptr;
  if (optimizer) {
    auto slot = [&](const Parameter& p) -> Tensor* {
      if (p.index < optimizer->velocity.size() && !optimizer->velocity[p.index].empty()) {
        return &optimizer->velocity[p.index];
      }
      return nullptr;
    };
    vw = slot(conv.weights);
    vb = slot(bn.beta);
  }

  for (std::size_t i = 0; i < f; ++i) {
    if (mask.kept[i]) continue;
    std::fill(w.begin() + static_cast<std::ptrdiff_t>(i * len),
              w.begin() + static_cast<std::ptrdiff_t>((i + 1) * len), 0.0);
    beta[i] = 0.0;
    rm[i] = 0.0;
    if (vw) {
      auto v = vw->data();
      std::fill(v.begin() + static_cast<std::ptrdiff_t>(i * len),
                v.begin() + static_cast<std::ptrdiff_t>((i + 1) * len), 0.0);
    }
    if (vb) vb->data()[i] = 0.0;
  }
  unit.mask() = mask;
  unit.mask().layer_id = unit.name();
}

void reapply_masks(Model& model, SGDState* optimizer) {
  for (auto* u : model.maskable_units()) {
    const FilterMask m = u->mask();
    apply_mask(*u, m, optimizer);
  }
}

void mask_gradients(Model& model) {
  for (auto* u : model.maskable_units()) {
    auto& w = u->conv().weights.value;
    auto& beta = u->bn().beta.value;
    if (!w.has_grad()) continue;
    const std::size_t len = u->conv().filter_size();
    auto gw = w.grad();
    auto gb = beta.has_grad() ? beta.grad() : std::span<double>{};
    for (std::size_t i = 0; i < u->out_filters(); ++i) {
      if (u->mask().kept[i]) continue;
      std::fill(gw.begin() + static_cast<std::ptrdiff_t>(i * len),
                gw.begin() + static_cast<std::ptrdiff_t>((i + 1) * len), 0.0);
      if (!gb.empty()) gb[i] = 0.0;
    }
  }
}

double weight_sparsity_ratio(const ConvParams& params) {
  const auto w = params.weights.value.data();
  const auto nonzero = static_cast<std::size_t>(
      std::count_if(w.begin(), w.end(), [](double v) { return v != 0.0; }));
  return 1.0 - static_cast<double>(nonzero) / static_cast<double>(w.size());
}

LayerSparsity measure_sparsity(const ConvBN& unit) {
  const auto w = unit.conv().weights.value.data();
  LayerSparsity s;
  s.layer_id = unit.name();
  s.total_count = w.size();
  s.nonzero_count = static_cast<std::size_t>(
      std::count_if(w.begin(), w.end(), [](double v) { return v != 0.0; }));
  s.wsr = 1.0 - static_cast<double>(s.nonzero_count) / static_cast<double>(s.total_count);
  s.ratio_k = unit.ratio();
  return s;
}

bool filter_is_zero(const ConvParams& params, std::size_t f) {
  const std::size_t len = params.filter_size();
  const auto w = params.weights.value.data();
  for (std::size_t j = 0; j < len; ++j)
    if (w[f * len + j] != 0.0) return false;
  return true;
}

}  // namespace psap
