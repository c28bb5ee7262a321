// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one JSON document, embedded verbatim in every output.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "psap/data.hpp"
#include "psap/model.hpp"
#include "psap/policy.hpp"
#include "psap/trainer.hpp"

namespace psap {

using Json = nlohmann::json;

inline constexpr const char* kToolVersion = PSAP_VERSION;

struct DataConfig {
  std::string source = "synthetic";  // synthetic | cifar10
  std::string path;                  // cifar10 directory
  SyntheticSpec synthetic;           // synthetic.seed unused when seed_from_run
  bool seed_from_run = true;         // synthetic data drawn from the run seed
  std::size_t test_size = 500;
};

struct ExperimentConfig {
  int seeds = 10;                   // ablate / gradient-accuracy seed count
  std::string checkpoint;           // trained model for sensitivity / gradient-accuracy
  int dense_epochs = 10;            // training of the dense model when no checkpoint is given
  std::string layer;                // sensitivity target
  std::vector<double> ratios = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int sensitivity_finetune_epochs = 5;
  double prune_fraction = 0.5;      // gradient-accuracy arm size
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "psap-out";
  ModelSpec model{Architecture::kResnetTiny, 2, 3, 8, 8, 10, 8, 0};
  DataConfig data;
  PruneConfig prune;
  TrainSchedule schedule;
  ExperimentConfig experiments;

  /// Model spec and schedule with the run seed filled in.
  ModelSpec model_spec() const;
  TrainSchedule train_schedule() const;
  SyntheticSpec synthetic_spec() const;

  /// Throws ConfigError describing the first invalid value.
  void validate() const;
};

Json to_json(const RunConfig& c);
/// Strict: unknown keys and wrong types are ConfigErrors naming the key path.
RunConfig run_config_from_json(const Json& j);
/// Parses a config file; syntax errors report line and column.
RunConfig load_run_config(const std::filesystem::path& path);
/// Parses JSON text; syntax errors report line and column.
Json parse_json_text(const std::string& text, const std::string& source);

Json to_json(const ModelSpec& s);
ModelSpec model_spec_from_json(const Json& j);

}  // namespace psap
