// SPDX-License-Identifier: Apache-2.0
#include "psap/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "psap/errors.hpp"
#include "psap/pruning.hpp"
#include "psap/step.hpp"

namespace psap {

std::string_view lr_decay_name(LrDecay d) {
  return d == LrDecay::kMilestones ? "milestones" : "linear";
}

LrDecay parse_lr_decay(std::string_view s) {
  if (s == "milestones") return LrDecay::kMilestones;
  if (s == "linear") return LrDecay::kLinear;
  throw ConfigError("unknown lr decay '" + std::string(s) + "' (expected milestones or linear)");
}

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::kSearch:
      return "search";
    case Phase::kFinetune:
      return "finetune";
    case Phase::kDone:
      return "done";
  }
  return "done";
}

Phase parse_phase(std::string_view s) {
  if (s == "search") return Phase::kSearch;
  if (s == "finetune") return Phase::kFinetune;
  if (s == "done") return Phase::kDone;
  throw FormatError("unknown phase '" + std::string(s) + "'");
}

std::string_view search_status_name(SearchStatus s) {
  switch (s) {
    case SearchStatus::kRunning:
      return "running";
    case SearchStatus::kTargetReached:
      return "target_reached";
    case SearchStatus::kMaxEpochs:
      return "max_epochs";
  }
  return "running";
}

SearchStatus parse_search_status(std::string_view s) {
  if (s == "running") return SearchStatus::kRunning;
  if (s == "target_reached") return SearchStatus::kTargetReached;
  if (s == "max_epochs") return SearchStatus::kMaxEpochs;
  throw FormatError("unknown search status '" + std::string(s) + "'");
}

void TrainSchedule::validate() const {
  if (max_search_epochs < 0 || max_finetune_epochs < 0) {
    throw ConfigError("epoch counts must be non-negative");
  }
  if (!(lr_initial > 0.0) || !std::isfinite(lr_initial)) {
    throw ConfigError("initial learning rate must be positive");
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (clip_max_norm && !(*clip_max_norm > 0.0)) throw ConfigError("clip norm must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw ConfigError("lr decay factor must lie in (0, 1]");
  }
  for (double m : milestones) {
    if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("lr milestones are fractions in [0, 1]");
  }
}

double learning_rate_at(const TrainSchedule& s, int epoch) {
  const double total = std::max(1, s.total_epochs());
  if (s.lr_decay == LrDecay::kLinear) {
    return s.lr_initial * std::max(0.0, 1.0 - static_cast<double>(epoch) / total);
  }
  double lr = s.lr_initial;
  for (double m : s.milestones)
    if (static_cast<double>(epoch) >= m * total) lr *= s.decay_factor;
  return lr;
}

void ExperimentLog::append(LogRow row) {
  if (!rows_.empty() && row.epoch <= rows_.back().epoch) {
    throw ContractError("log rows must be strictly ordered by epoch");
  }
  rows_.push_back(std::move(row));
}

namespace {

SGDState make_optimizer(const TrainSchedule& s) {
  SGDState opt;
  opt.learning_rate = s.lr_initial;
  opt.momentum = s.momentum;
  opt.weight_decay = s.weight_decay;
  opt.clip_max_norm = s.clip_max_norm;
  return opt;
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

Batch batch_at(const Dataset& data, const std::vector<std::size_t>& order, std::size_t step,
               const TrainSchedule& s, int epoch) {
  const std::size_t start = step * s.batch_size;
  const std::size_t end = std::min(order.size(), start + s.batch_size);
  AugmentOptions aug;
  aug.enabled = s.augment;
  return make_batch(data, std::span<const std::size_t>(order).subspan(start, end - start), aug,
                    s.seed, static_cast<std::uint64_t>(epoch));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PsapRunner::PsapRunner(Model model, PruneConfig config, TrainSchedule schedule,
                       const Dataset& train, const Dataset& test)
    : state_{std::move(model), {}, 0, Phase::kSearch, 0, 0, SearchStatus::kRunning, 0.0, {}},
      config_(config),
      schedule_(std::move(schedule)),
      train_(&train),
      test_(&test) {
  config_.validate();
  schedule_.validate();
  if (train.size() == 0) throw ConfigError("training set is empty");
  state_.optimizer = make_optimizer(schedule_);
  if (!config_.adaptive) {
    state_.uniform_ratio =
        config_.uniform_ratio
            ? *config_.uniform_ratio
            : uniform_ratio_for_target(state_.model, config_.tau, config_.target, config_.s_min);
  }
  advance_phase();
}

PsapRunner::PsapRunner(RunState state, PruneConfig config, TrainSchedule schedule,
                       const Dataset& train, const Dataset& test)
    : state_(std::move(state)),
      config_(config),
      schedule_(std::move(schedule)),
      train_(&train),
      test_(&test) {
  config_.validate();
  schedule_.validate();
  advance_phase();
}

void PsapRunner::advance_phase() {
  if (state_.phase == Phase::kSearch) {
    if (state_.status == SearchStatus::kRunning &&
        state_.search_epochs >= schedule_.max_search_epochs) {
      state_.status = SearchStatus::kMaxEpochs;
    }
    if (state_.status != SearchStatus::kRunning) state_.phase = Phase::kFinetune;
  }
  if (state_.phase == Phase::kFinetune &&
      state_.finetune_epochs >= schedule_.finetune_budget(state_.search_epochs)) {
    state_.phase = Phase::kDone;
  }
}

void PsapRunner::step_epoch() {
  switch (state_.phase) {
    case Phase::kSearch:
      search_epoch();
      break;
    case Phase::kFinetune:
      finetune_epoch();
      break;
    case Phase::kDone:
      throw ContractError("run already finished");
  }
  advance_phase();
}

LogRow PsapRunner::finish_row(LogRow row, double loss_sum, std::size_t correct, std::size_t seen,
                              const std::vector<std::size_t>& abnormal) {
  row.train_loss = loss_sum / static_cast<double>(seen);
  row.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  const EvalResult ev = evaluate(state_.model, *test_, schedule_.batch_size);
  row.test_loss = ev.loss;
  row.test_accuracy = ev.accuracy;
  const auto units = state_.model.maskable_units();
  for (std::size_t l = 0; l < units.size(); ++l) {
    const auto s = measure_sparsity(*units[l]);
    row.layers.push_back({units[l]->name(), s.wsr, units[l]->ratio(),
                          l < abnormal.size() ? abnormal[l] : 0});
  }
  return row;
}

void PsapRunner::search_epoch() {
  const auto t0 = std::chrono::steady_clock::now();
  Model& model = state_.model;
  SGDState& opt = state_.optimizer;
  const int epoch = state_.epoch;
  const int search_index = state_.search_epochs + 1;
  opt.learning_rate = learning_rate_at(schedule_, epoch);

  const RatioPlan plan = update_all_ratios(model, config_, search_index, state_.uniform_ratio);
  const bool protect = config_.recon_mode != ReconMode::kNone;
  WeightBackup backup;
  if (protect) backup = backup_weights(model, epoch);
  const auto units = model.maskable_units();
  for (std::size_t l = 0; l < units.size(); ++l) {
    auto* u = units[l];
    u->set_ratio(plan.ratios[l]);
    const auto norms = filter_l2_norms(u->conv());
    const auto pruned = select_prune_indices(norms, plan.ratios[l]);
    apply_mask(*u, make_mask(u->name(), u->out_filters(), pruned), &opt);
  }

  const auto order = epoch_order(train_->size(), schedule_.seed, static_cast<std::uint64_t>(epoch));
  const std::size_t steps = steps_per_epoch(order.size(), schedule_.batch_size);
  double loss_sum = 0.0, max_grad = 0.0;
  std::size_t correct = 0, seen = 0;
  std::vector<std::size_t> abnormal(units.size(), 0);
  CompressionReport comp;
  for (std::size_t step = 0; step < steps; ++step) {
    const Batch batch = batch_at(*train_, order, step, schedule_, epoch);
    StepResult r;
    if (step == 0 && protect) {
      std::vector<std::vector<double>> grad_norms;
      const bool want_grads = config_.detect == DetectVariant::kGradNorm;
      r = probe_step(model, batch, opt, want_grads ? &grad_norms : nullptr);
      DetectOptions d;
      d.variant = config_.detect;
      d.pool = config_.threshold_pool;
      d.grad_norms = want_grads ? &grad_norms : nullptr;
      const AbnormalReport report = detect_abnormal(model, d);
      reconstruct(model, backup, report, config_.recon_mode, &opt, schedule_.seed);
      for (std::size_t l = 0; l < units.size(); ++l) abnormal[l] = report.count(l);
      if (on_reconstruct) on_reconstruct(report, backup);
    } else {
      r = train_step(model, batch, opt);
    }
    if (step == 0) comp = mask_compression(model);
    loss_sum += r.loss * static_cast<double>(r.count);
    correct += r.correct;
    seen += r.count;
    max_grad = std::max(max_grad, r.stats.max_abs_grad);
  }

  const bool reached = comp.removed(config_.target) >= config_.tau;
  if (config_.adaptive && reached) {
    state_.status = SearchStatus::kTargetReached;
  } else if (search_index >= schedule_.max_search_epochs) {
    // Fixed-ratio runs meet the target at their first prune; they keep
    // iterating for the whole search budget.
    state_.status = reached ? SearchStatus::kTargetReached : SearchStatus::kMaxEpochs;
  }

  LogRow row;
  row.epoch = epoch;
  row.phase = Phase::kSearch;
  row.learning_rate = opt.learning_rate;
  row.param_ratio_removed = comp.param_ratio_removed;
  row.flops_removed_fraction = comp.flops_removed_fraction;
  row.max_grad = max_grad;
  row = finish_row(std::move(row), loss_sum, correct, seen, abnormal);
  row.wall_time = seconds_since(t0);
  state_.log.append(std::move(row));
  ++state_.epoch;
  ++state_.search_epochs;
}

void PsapRunner::finetune_epoch() {
  const auto t0 = std::chrono::steady_clock::now();
  Model& model = state_.model;
  SGDState& opt = state_.optimizer;
  const int epoch = state_.epoch;
  opt.learning_rate = learning_rate_at(schedule_, epoch);
  reapply_masks(model, &opt);

  const auto order = epoch_order(train_->size(), schedule_.seed, static_cast<std::uint64_t>(epoch));
  const std::size_t steps = steps_per_epoch(order.size(), schedule_.batch_size);
  double loss_sum = 0.0, max_grad = 0.0;
  std::size_t correct = 0, seen = 0;
  StepOptions hard;
  hard.hard_masks = true;
  for (std::size_t step = 0; step < steps; ++step) {
    const Batch batch = batch_at(*train_, order, step, schedule_, epoch);
    const StepResult r = train_step(model, batch, opt, hard);
    loss_sum += r.loss * static_cast<double>(r.count);
    correct += r.correct;
    seen += r.count;
    max_grad = std::max(max_grad, r.stats.max_abs_grad);
  }
  const CompressionReport comp = mask_compression(model);
  LogRow row;
  row.epoch = epoch;
  row.phase = Phase::kFinetune;
  row.learning_rate = opt.learning_rate;
  row.param_ratio_removed = comp.param_ratio_removed;
  row.flops_removed_fraction = comp.flops_removed_fraction;
  row.max_grad = max_grad;
  row = finish_row(std::move(row), loss_sum, correct, seen, {});
  row.wall_time = seconds_since(t0);
  state_.log.append(std::move(row));
  ++state_.epoch;
  ++state_.finetune_epochs;
}

RunResult PsapRunner::run(const EpochHook& hook) {
  while (!done()) {
    step_epoch();
    if (hook) hook(state_);
  }
  return result();
}

RunResult PsapRunner::result() {
  RunResult r;
  r.compression = mask_compression(state_.model);
  if (!state_.log.empty()) {
    r.test_accuracy = state_.log.rows().back().test_accuracy;
    r.test_loss = state_.log.rows().back().test_loss;
  } else {
    const EvalResult ev = evaluate(state_.model, *test_, schedule_.batch_size);
    r.test_accuracy = ev.accuracy;
    r.test_loss = ev.loss;
  }
  r.status = state_.status;
  r.search_epochs = state_.search_epochs;
  for (const auto* u : state_.model.maskable_units()) {
    r.layers.push_back(u->name());
    r.ratios.push_back(u->ratio());
  }
  r.log = state_.log;
  return r;
}

RunResult run_psap(Model model, const PruneConfig& config, const TrainSchedule& schedule,
                   const Dataset& train, const Dataset& test) {
  PsapRunner runner(std::move(model), config, schedule, train, test);
  return runner.run();
}

void train_epochs(Model& model, SGDState& optimizer, const TrainSchedule& schedule,
                  const Dataset& train, int first_epoch, int epochs, bool hard_masks) {
  StepOptions opts;
  opts.hard_masks = hard_masks;
  for (int e = first_epoch; e < first_epoch + epochs; ++e) {
    optimizer.learning_rate = learning_rate_at(schedule, e);
    if (hard_masks) reapply_masks(model, &optimizer);
    const auto order = epoch_order(train.size(), schedule.seed, static_cast<std::uint64_t>(e));
    const std::size_t steps = steps_per_epoch(order.size(), schedule.batch_size);
    for (std::size_t step = 0; step < steps; ++step) {
      train_step(model, batch_at(train, order, step, schedule, e), optimizer, opts);
    }
  }
}

}  // namespace psap
