// SPDX-License-Identifier: Apache-2.0
//
// The two-stage prune/train procedure: an adaptive search stage followed by
// fine-tuning with frozen masks.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "psap/data.hpp"
#include "psap/model.hpp"
#include "psap/optim.hpp"
#include "psap/policy.hpp"
#include "psap/protect.hpp"

namespace psap {

enum class LrDecay { kMilestones, kLinear };
std::string_view lr_decay_name(LrDecay d);
LrDecay parse_lr_decay(std::string_view s);

struct TrainSchedule {
  int max_search_epochs = 30;
  int max_finetune_epochs = 100;
  double lr_initial = 0.05;
  LrDecay lr_decay = LrDecay::kMilestones;
  std::vector<double> milestones = {0.5, 0.75};  // fractions of all epochs
  double decay_factor = 0.2;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::optional<double> clip_max_norm = kDefaultClipNorm;
  bool augment = false;
  /// Fine-tune for all epochs the search stage left unused, so every run
  /// trains for total_epochs().
  bool fill_budget = false;

  int total_epochs() const { return max_search_epochs + max_finetune_epochs; }
  int finetune_budget(int search_epochs_used) const {
    return fill_budget ? total_epochs() - search_epochs_used : max_finetune_epochs;
  }
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Learning rate of global epoch `epoch` (0-based, search epochs first).
double learning_rate_at(const TrainSchedule& schedule, int epoch);

enum class Phase { kSearch, kFinetune, kDone };
std::string_view phase_name(Phase p);
Phase parse_phase(std::string_view s);

struct LayerLog {
  std::string layer;
  double wsr = 0.0;  // measured at the end of the epoch
  double k = 0.0;
  std::size_t abnormal = 0;
};

struct LogRow {
  int epoch = 0;
  Phase phase = Phase::kSearch;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  std::vector<LayerLog> layers;
  double param_ratio_removed = 0.0;  // from the masks in force for the epoch
  double flops_removed_fraction = 0.0;
  double max_grad = 0.0;  // largest pre-clip gradient entry seen in the epoch
  double wall_time = 0.0;  // seconds
};

/// Append-only, strictly epoch-ordered rows.
class ExperimentLog {
 public:
  /// Throws ContractError if the row does not follow the last one.
  void append(LogRow row);
  const std::vector<LogRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

 private:
  std::vector<LogRow> rows_;
};

enum class SearchStatus { kRunning, kTargetReached, kMaxEpochs };
std::string_view search_status_name(SearchStatus s);
SearchStatus parse_search_status(std::string_view s);

/// Everything needed to continue a run from an epoch boundary.
struct RunState {
  Model model;
  SGDState optimizer;
  int epoch = 0;  // next global epoch to run
  Phase phase = Phase::kSearch;
  int search_epochs = 0;  // completed search epochs
  int finetune_epochs = 0;
  SearchStatus status = SearchStatus::kRunning;
  double uniform_ratio = 0.0;  // resolved ratio of non-adaptive runs
  ExperimentLog log;
};

struct RunResult {
  CompressionReport compression;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  SearchStatus status = SearchStatus::kRunning;
  int search_epochs = 0;
  std::vector<std::string> layers;
  std::vector<double> ratios;
  ExperimentLog log;
};

class PsapRunner {
 public:
  using EpochHook = std::function<void(const RunState&)>;

  /// Validates both configs before any compute (ConfigError).
  PsapRunner(Model model, PruneConfig config, TrainSchedule schedule, const Dataset& train,
             const Dataset& test);
  /// Continues from a saved state.
  PsapRunner(RunState state, PruneConfig config, TrainSchedule schedule, const Dataset& train,
             const Dataset& test);

  bool done() const { return state_.phase == Phase::kDone; }
  /// Runs one epoch of the current phase.
  void step_epoch();
  /// Runs to completion; `hook` is called after every epoch.
  RunResult run(const EpochHook& hook = {});
  RunResult result();

  const RunState& state() const { return state_; }
  RunState& state() { return state_; }
  const PruneConfig& config() const { return config_; }
  const TrainSchedule& schedule() const { return schedule_; }

  /// Called after each search epoch's reconstruction with the report.
  std::function<void(const AbnormalReport&, const WeightBackup&)> on_reconstruct;

 private:
  void search_epoch();
  void finetune_epoch();
  void advance_phase();
  LogRow finish_row(LogRow row, double loss_sum, std::size_t correct, std::size_t seen,
                    const std::vector<std::size_t>& abnormal);

  RunState state_;
  PruneConfig config_;
  TrainSchedule schedule_;
  const Dataset* train_;
  const Dataset* test_;
};

/// search + fine-tune from a freshly built model.
RunResult run_psap(Model model, const PruneConfig& config, const TrainSchedule& schedule,
                   const Dataset& train, const Dataset& test);

/// Plain training with no pruning, for dense baselines and sensitivity runs.
/// Masks currently on the model are enforced as hard masks.
void train_epochs(Model& model, SGDState& optimizer, const TrainSchedule& schedule,
                  const Dataset& train, int first_epoch, int epochs, bool hard_masks);

}  // namespace psap
