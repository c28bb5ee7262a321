// SPDX-License-Identifier: Apache-2.0
//
// Filter-level masking: importance norms, sparsity measurement, selection and
// application of masks.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "psap/layers.hpp"
#include "psap/model.hpp"
#include "psap/optim.hpp"

namespace psap {

struct LayerSparsity {
  std::string layer_id;
  double wsr = 0.0;
  double ratio_k = 0.0;
  std::size_t nonzero_count = 0;
  std::size_t total_count = 0;
};

/// Entry f is the L2 norm of filter f's weights.
std::vector<double> filter_l2_norms(const ConvParams& params);

/// Number of filters a ratio k removes from a layer of n filters: floor(k*n).
std::size_t pruned_filter_count(double k, std::size_t n);

/// The floor(k*n) indices with the smallest norms, ties to the lower index,
/// returned in ascending index order.
std::vector<std::size_t> select_prune_indices(std::span<const double> norms, double k);

FilterMask make_mask(const std::string& layer_id, std::size_t filters,
                     std::span<const std::size_t> pruned);

/// Zeroes the weights, BN shift and running mean of every pruned filter and
/// stores the mask on the unit. BN scale is left alone so a pruned filter
/// still receives gradient (soft pruning). Velocity entries of the zeroed
/// values are cleared when an optimizer state is given.
void apply_mask(ConvBN& unit, const FilterMask& mask, SGDState* optimizer = nullptr);

/// Re-applies every unit's stored mask.
void reapply_masks(Model& model, SGDState* optimizer = nullptr);

/// Zeroes the gradients of masked weights and BN shifts (hard masking).
void mask_gradients(Model& model);

/// 1 - (#entries != 0) / (#entries) over the conv weights.
double weight_sparsity_ratio(const ConvParams& params);

LayerSparsity measure_sparsity(const ConvBN& unit);

/// True when every weight of filter f is exactly zero.
bool filter_is_zero(const ConvParams& params, std::size_t f);

}  // namespace psap
