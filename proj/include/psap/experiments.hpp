// SPDX-License-Identifier: Apache-2.0
//
// Run orchestration and the diagnostic experiments behind the CLI
// subcommands. Every artifact written here embeds the configuration and the
// tool version.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "psap/config.hpp"
#include "psap/csv.hpp"
#include "psap/trainer.hpp"

namespace psap {

namespace fs = std::filesystem;

inline constexpr const char* kLogSchema = "psap-log/1";
inline constexpr const char* kSummarySchema = "psap-summary/1";
inline constexpr const char* kAblationSchema = "psap-ablation/1";
inline constexpr const char* kWsrTraceSchema = "psap-wsr-trace/1";
inline constexpr const char* kSensitivitySchema = "psap-sensitivity/1";
inline constexpr const char* kGradientSchema = "psap-gradient-accuracy/1";

struct DataPair {
  Dataset train;
  Dataset test;
};

DataPair load_data(const RunConfig& config);

/// {"schema", "tool_version", "config"}: the metadata block of an artifact.
Json artifact_meta(const RunConfig& config, const char* schema);

/// Log rows as CSV. The trailing "meta" column carries artifact_meta on the
/// first row and is empty afterwards.
CsvTable log_to_csv(const ExperimentLog& log, const Json& meta);
/// Validates the column set against the schema; throws FormatError.
ExperimentLog log_from_csv(const CsvTable& table, Json* meta = nullptr);

Json run_summary(const RunConfig& config, const RunResult& result);

/// Builds the model and runs search + fine-tune without writing anything.
RunResult run_experiment(const RunConfig& config, const DataPair& data);

/// Runs and writes log.csv, checkpoint.bin (refreshed after every epoch),
/// summary.json and config.json into `out_dir`.
RunResult cmd_run(const RunConfig& config, const fs::path& out_dir);
/// Continues the run saved in `checkpoint`, writing into `out_dir`.
RunResult resume_run(const fs::path& checkpoint, const fs::path& out_dir);

struct AblationArm {
  std::string type;
  bool adaptive = false;
  bool reconstruction = false;
};
/// Pure IPT, PSAP (w/o PR), PSAP (w/o SA), PSAP.
std::vector<AblationArm> ablation_arms();

struct AblationResult {
  std::vector<AblationArm> arms;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<RunResult>> runs;  // [arm][seed]
  double mean_accuracy(std::size_t arm) const;
};

AblationResult run_ablation(const RunConfig& config);
CsvTable ablation_table(const RunConfig& config, const AblationResult& result);
AblationResult cmd_ablate(const RunConfig& config, const fs::path& out_dir);

/// Uniform-ratio soft pruning for schedule.search_epochs epochs. Row e holds
/// every layer's WSR before epoch e's pruning step (row 0: the dense model).
CsvTable cmd_wsr_trace(const RunConfig& config, const fs::path& out_dir);
CsvTable wsr_trace(const RunConfig& config);

/// A trained model: from experiments.checkpoint, else trained densely for
/// experiments.dense_epochs.
Model trained_model(const RunConfig& config, const DataPair& data);

struct SensitivityPoint {
  double ratio = 0.0;
  std::size_t pruned_filters = 0;
  double accuracy = 0.0;
};
struct SensitivityResult {
  std::string layer;
  double base_accuracy = 0.0;
  std::vector<SensitivityPoint> points;
};
/// Prunes only experiments.layer at each ratio, fine-tunes briefly with hard
/// masks at the schedule's final learning rate, and evaluates.
SensitivityResult sensitivity(const RunConfig& config, const Model& trained, const DataPair& data);
CsvTable cmd_sensitivity(const RunConfig& config, const fs::path& out_dir);

enum class PruneHalf { kLower, kUpper };

struct GradientArm {
  std::uint64_t seed = 0;
  PruneHalf half = PruneHalf::kLower;
  std::size_t pruned_filters = 0;
  double max_grad = 0.0;  // pre-clip, on the next training batch
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
  double accuracy_drop() const { return accuracy_before - accuracy_after; }
};
/// Both arms for one trained model: prune the lowest- (or highest-) norm
/// `fraction` of every maskable layer's filters.
std::vector<GradientArm> gradient_accuracy_pair(const RunConfig& config, const Model& trained,
                                                const DataPair& data, double fraction);
CsvTable cmd_gradient_accuracy(const RunConfig& config, const fs::path& out_dir);

/// Checkpoint metadata without the tensor payload.
Json cmd_inspect(const fs::path& checkpoint);

}  // namespace psap
