// SPDX-License-Identifier: Apache-2.0
#include "psap/protect.hpp"

#include <algorithm>
#include <numeric>

#include "psap/errors.hpp"
#include "psap/models.hpp"
#include "psap/pruning.hpp"

namespace psap {

WeightBackup backup_weights(const Model& model, int epoch) {
  WeightBackup b;
  b.epoch = epoch;
  for (const auto* u : model.maskable_units()) {
    b.layers.push_back(u->name());
    b.weights.push_back(u->conv().weights.value);
    b.gamma.push_back(u->bn().gamma.value);
    b.beta.push_back(u->bn().beta.value);
    b.running_mean.push_back(u->bn().running_mean);
    b.running_var.push_back(u->bn().running_var);
  }
  // Tensors copy their gradient buffers too; a snapshot holds values only.
  for (auto* group : {&b.weights, &b.gamma, &b.beta}) {
    for (auto& t : *group) t = Tensor(t.shape(), t.values());
  }
  return b;
}

namespace {

void check_structure(const Model& model, const WeightBackup& b) {
  const auto units = model.maskable_units();
  if (units.size() != b.layers.size()) throw ContractError("backup taken from a different model");
  for (std::size_t l = 0; l < units.size(); ++l) {
    if (units[l]->name() != b.layers[l] ||
        units[l]->conv().weights.value.shape() != b.weights[l].shape()) {
      throw ContractError("backup layer " + b.layers[l] + " does not match the model");
    }
  }
}

void zero_filter_velocity(ConvBN& u, std::size_t f, SGDState* opt) {
  if (!opt) return;
  const std::size_t len = u.conv().filter_size();
  auto slot = [&](const Parameter& p) -> Tensor* {
    if (p.index < opt->velocity.size() && !opt->velocity[p.index].empty())
      return &opt->velocity[p.index];
    return nullptr;
  };
  if (auto* v = slot(u.conv().weights)) {
    std::fill_n(v->data().begin() + static_cast<std::ptrdiff_t>(f * len), len, 0.0);
  }
  if (auto* v = slot(u.bn().gamma)) v->data()[f] = 0.0;
  if (auto* v = slot(u.bn().beta)) v->data()[f] = 0.0;
}

}  // namespace

void restore_backup(Model& model, const WeightBackup& backup) {
  check_structure(model, backup);
  const auto units = model.maskable_units();
  for (std::size_t l = 0; l < units.size(); ++l) {
    auto* u = units[l];
    u->conv().weights.value.values() = backup.weights[l].values();
    u->bn().gamma.value.values() = backup.gamma[l].values();
    u->bn().beta.value.values() = backup.beta[l].values();
    u->bn().running_mean.values() = backup.running_mean[l].values();
    u->bn().running_var.values() = backup.running_var[l].values();
  }
}

std::size_t AbnormalReport::total() const {
  std::size_t n = 0;
  for (const auto& a : abnormal) n += a.size();
  return n;
}

StepResult probe_step(Model& model, const Batch& batch, SGDState& optimizer,
                      std::vector<std::vector<double>>* filter_grad_norms) {
  StepOptions opts;
  opts.filter_grad_norms = filter_grad_norms;
  return train_step(model, batch, optimizer, opts);
}

AbnormalReport detect_abnormal(const Model& model, const DetectOptions& options) {
  const auto units = model.maskable_units();
  if (options.variant == DetectVariant::kGradNorm &&
      (!options.grad_norms || options.grad_norms->size() != units.size())) {
    throw ContractError("grad-norm detection needs the probe step's filter gradient norms");
  }
  AbnormalReport r;
  r.layers.resize(units.size());
  r.abnormal.resize(units.size());
  r.norms.resize(units.size());
  r.threshold.assign(units.size(), 0.0);

#pragma omp parallel for schedule(static)
  for (std::size_t l = 0; l < units.size(); ++l) {
    const auto* u = units[l];
    r.layers[l] = u->name();
    r.norms[l] = options.variant == DetectVariant::kWeightNorm ? filter_l2_norms(u->conv())
                                                               : (*options.grad_norms)[l];
    const auto& norms = r.norms[l];
    const auto& kept = u->mask().kept;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t f = 0; f < norms.size(); ++f) {
      if (options.pool == ThresholdPool::kPruned && kept[f]) continue;
      sum += norms[f];
      ++n;
    }
    r.threshold[l] = n == 0 ? 0.0 : sum / static_cast<double>(n);
    for (std::size_t f = 0; f < norms.size(); ++f) {
      if (!kept[f] && norms[f] > r.threshold[l]) r.abnormal[l].push_back(f);
    }
  }
  return r;
}

void reconstruct(Model& model, WeightBackup& backup, const AbnormalReport& report,
                 ReconMode mode, SGDState* optimizer, std::uint64_t seed) {
  if (backup.consumed) throw ContractError("weight backup already consumed");
  check_structure(model, backup);
  backup.consumed = true;
  if (mode == ReconMode::kNone) return;
  const auto units = model.maskable_units();
  if (report.layers.size() != units.size()) throw ContractError("report does not match model");
  for (std::size_t l = 0; l < units.size(); ++l) {
    auto* u = units[l];
    if (report.layers[l] != u->name()) throw ContractError("report layer order mismatch");
    const std::size_t len = u->conv().filter_size();
    for (std::size_t f : report.abnormal[l]) {
      switch (mode) {
        case ReconMode::kReload: {
          const auto src = backup.weights[l].data();
          auto w = u->conv().weights.value.data();
          std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(f * len), len,
                      w.begin() + static_cast<std::ptrdiff_t>(f * len));
          u->bn().gamma.value[f] = backup.gamma[l][f];
          u->bn().beta.value[f] = backup.beta[l][f];
          u->bn().running_mean[f] = backup.running_mean[l][f];
          u->bn().running_var[f] = backup.running_var[l][f];
          zero_filter_velocity(*u, f, optimizer);
          break;
        }
        case ReconMode::kReactivate:
          break;
        case ReconMode::kReinitialize: {
          Rng rng = make_rng(seed, Stream::kReinit,
                             {static_cast<std::uint64_t>(backup.epoch), l, f});
          reinitialize_filter(*u, f, rng);
          zero_filter_velocity(*u, f, optimizer);
          break;
        }
        case ReconMode::kNone:
          break;
      }
      u->mask().kept.at(f) = true;
    }
  }
}

}  // namespace psap
