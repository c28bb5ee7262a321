// SPDX-License-Identifier: Apache-2.0
#include "psap/experiments.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "psap/checkpoint.hpp"
#include "psap/errors.hpp"
#include "psap/models.hpp"
#include "psap/pruning.hpp"
#include "psap/step.hpp"

namespace psap {

namespace {

const std::vector<std::string> kLogColumns = {
    "epoch",          "phase",     "lr",        "train_loss", "train_acc",
    "test_loss",      "test_acc",  "param_ratio_removed", "flops_removed_fraction",
    "max_grad",       "wall_time"};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

std::string meta_cell(const Json& meta, std::size_t row) { return row == 0 ? meta.dump() : ""; }

RunConfig with_seed(const RunConfig& c, std::uint64_t seed) {
  RunConfig r = c;
  r.seed = seed;
  return r;
}

std::vector<std::uint64_t> seed_list(const RunConfig& c) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < c.experiments.seeds; ++i) s.push_back(c.seed + static_cast<std::uint64_t>(i));
  return s;
}

std::string layer_list(const Model& m) {
  std::string s;
  for (const auto& n : m.unit_names(true)) s += (s.empty() ? "" : ", ") + n;
  return s;
}

}  // namespace

DataPair load_data(const RunConfig& config) {
  if (config.data.source == "cifar10") {
    auto [train, test] = load_cifar10(config.data.path);
    return {std::move(train), std::move(test)};
  }
  auto [train, test] = synthetic_pair(config.synthetic_spec(), config.data.test_size);
  return {std::move(train), std::move(test)};
}

Json artifact_meta(const RunConfig& config, const char* schema) {
  return Json{{"schema", schema}, {"tool_version", kToolVersion}, {"config", to_json(config)}};
}

CsvTable log_to_csv(const ExperimentLog& log, const Json& meta) {
  CsvTable t;
  t.header = kLogColumns;
  if (!log.empty()) {
    for (const auto& l : log.rows().front().layers) {
      t.header.push_back(l.layer + ".wsr");
      t.header.push_back(l.layer + ".k");
      t.header.push_back(l.layer + ".abnormal");
    }
  }
  t.header.push_back("meta");
  for (std::size_t i = 0; i < log.size(); ++i) {
    const LogRow& r = log.rows()[i];
    std::vector<std::string> row = {std::to_string(r.epoch),
                                    std::string(phase_name(r.phase)),
                                    format_double(r.learning_rate),
                                    format_double(r.train_loss),
                                    format_double(r.train_accuracy),
                                    format_double(r.test_loss),
                                    format_double(r.test_accuracy),
                                    format_double(r.param_ratio_removed),
                                    format_double(r.flops_removed_fraction),
                                    format_double(r.max_grad),
                                    format_double(r.wall_time)};
    for (const auto& l : r.layers) {
      row.push_back(format_double(l.wsr));
      row.push_back(format_double(l.k));
      row.push_back(std::to_string(l.abnormal));
    }
    row.push_back(meta_cell(meta, i));
    t.rows.push_back(std::move(row));
  }
  return t;
}

ExperimentLog log_from_csv(const CsvTable& t, Json* meta) {
  const std::size_t fixed = kLogColumns.size();
  if (t.header.size() < fixed + 1 || t.header.back() != "meta" ||
      !std::equal(kLogColumns.begin(), kLogColumns.end(), t.header.begin())) {
    throw FormatError("log CSV columns do not match schema " + std::string(kLogSchema));
  }
  const std::size_t layer_cols = t.header.size() - fixed - 1;
  if (layer_cols % 3 != 0) throw FormatError("log CSV has a partial per-layer column group");
  std::vector<std::string> layers;
  for (std::size_t c = fixed; c < fixed + layer_cols; c += 3) {
    const std::string& h = t.header[c];
    if (h.size() < 5 || h.compare(h.size() - 4, 4, ".wsr") != 0) {
      throw FormatError("log CSV column '" + h + "' is not a layer .wsr column");
    }
    const std::string name = h.substr(0, h.size() - 4);
    if (t.header[c + 1] != name + ".k" || t.header[c + 2] != name + ".abnormal") {
      throw FormatError("log CSV columns for layer " + name + " are out of order");
    }
    layers.push_back(name);
  }
  if (!t.rows.empty()) {
    Json m;
    try {
      m = Json::parse(t.rows.front().back());
    } catch (const Json::parse_error&) {
      throw FormatError("log CSV meta cell is not JSON");
    }
    if (!m.contains("schema") || m["schema"] != kLogSchema) {
      throw FormatError("log CSV schema is not " + std::string(kLogSchema));
    }
    if (meta) *meta = m;
  }
  ExperimentLog log;
  for (const auto& row : t.rows) {
    LogRow r;
    r.epoch = static_cast<int>(parse_double(row[0]));
    r.phase = parse_phase(row[1]);
    r.learning_rate = parse_double(row[2]);
    r.train_loss = parse_double(row[3]);
    r.train_accuracy = parse_double(row[4]);
    r.test_loss = parse_double(row[5]);
    r.test_accuracy = parse_double(row[6]);
    r.param_ratio_removed = parse_double(row[7]);
    r.flops_removed_fraction = parse_double(row[8]);
    r.max_grad = parse_double(row[9]);
    r.wall_time = parse_double(row[10]);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::size_t c = fixed + 3 * l;
      r.layers.push_back({layers[l], parse_double(row[c]), parse_double(row[c + 1]),
                          static_cast<std::size_t>(parse_double(row[c + 2]))});
    }
    log.append(std::move(r));
  }
  return log;
}

Json run_summary(const RunConfig& config, const RunResult& r) {
  Json layers = Json::array();
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    Json l{{"layer", r.layers[i]}, {"ratio", r.ratios[i]}};
    for (const auto& s : r.compression.per_layer) {
      if (s.layer_id == r.layers[i]) l["wsr"] = s.wsr;
    }
    if (!r.log.empty()) {
      for (const auto& ll : r.log.rows().back().layers)
        if (ll.layer == r.layers[i]) l["wsr"] = ll.wsr;
    }
    layers.push_back(l);
  }
  std::size_t abnormal = 0;
  for (const auto& row : r.log.rows())
    for (const auto& l : row.layers) abnormal += l.abnormal;
  Json meta = artifact_meta(config, kSummarySchema);
  meta["final"] = {{"test_accuracy", r.test_accuracy}, {"test_loss", r.test_loss}};
  meta["search"] = {{"status", search_status_name(r.status)},
                    {"epochs", r.search_epochs},
                    {"target", config.prune.tau},
                    {"metric", target_metric_name(config.prune.target)},
                    {"abnormal_filters_total", abnormal}};
  meta["epochs"] = r.log.size();
  meta["compression"] = {{"param_ratio_removed", r.compression.param_ratio_removed},
                         {"flops_total", r.compression.flops_total},
                         {"flops_remaining", r.compression.flops_remaining},
                         {"flops_removed_fraction", r.compression.flops_removed_fraction}};
  meta["layers"] = layers;
  return meta;
}

RunResult run_experiment(const RunConfig& config, const DataPair& data) {
  config.validate();
  return run_psap(build_model(config.model_spec()), config.prune, config.train_schedule(),
                  data.train, data.test);
}

namespace {

RunResult run_with_artifacts(PsapRunner& runner, const RunConfig& config, const fs::path& out) {
  const Json cfg = to_json(config);
  const Json meta = artifact_meta(config, kLogSchema);
  write_text(out / "config.json", cfg.dump(2) + "\n");
  save_checkpoint(out / "checkpoint.bin", cfg, runner.state());
  RunResult r = runner.run([&](const RunState& st) {
    save_checkpoint(out / "checkpoint.bin", cfg, st);
    write_text(out / "log.csv", to_csv(log_to_csv(st.log, meta)));
  });
  write_text(out / "log.csv", to_csv(log_to_csv(r.log, meta)));
  write_text(out / "summary.json", run_summary(config, r).dump(2) + "\n");
  return r;
}

}  // namespace

RunResult cmd_run(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const DataPair data = load_data(config);
  ensure_dir(out_dir);
  PsapRunner runner(build_model(config.model_spec()), config.prune, config.train_schedule(),
                    data.train, data.test);
  return run_with_artifacts(runner, config, out_dir);
}

RunResult resume_run(const fs::path& checkpoint, const fs::path& out_dir) {
  Checkpoint ck = load_checkpoint(checkpoint);
  const RunConfig config = run_config_from_json(ck.config);
  config.validate();
  if (!(ck.state.model.spec() == config.model_spec())) {
    throw FormatError("checkpoint model does not match its embedded configuration");
  }
  const DataPair data = load_data(config);
  ensure_dir(out_dir);
  PsapRunner runner(std::move(ck.state), config.prune, config.train_schedule(), data.train,
                    data.test);
  return run_with_artifacts(runner, config, out_dir);
}

std::vector<AblationArm> ablation_arms() {
  return {{"Pure IPT", false, false},
          {"PSAP (w/o PR)", true, false},
          {"PSAP (w/o SA)", false, true},
          {"PSAP", true, true}};
}

double AblationResult::mean_accuracy(std::size_t arm) const {
  const auto& r = runs.at(arm);
  if (r.empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : r) s += x.test_accuracy;
  return s / static_cast<double>(r.size());
}

AblationResult run_ablation(const RunConfig& config) {
  config.validate();
  AblationResult res;
  res.arms = ablation_arms();
  res.seeds = seed_list(config);
  res.runs.assign(res.arms.size(), {});
  // Reconstruction arms use the configured mode (reload unless set otherwise).
  const ReconMode on_mode =
      config.prune.recon_mode == ReconMode::kNone ? ReconMode::kReload : config.prune.recon_mode;
  for (std::uint64_t seed : res.seeds) {
    RunConfig base = with_seed(config, seed);
    const DataPair data = load_data(base);
    for (std::size_t a = 0; a < res.arms.size(); ++a) {
      RunConfig c = base;
      c.prune.adaptive = res.arms[a].adaptive;
      c.prune.recon_mode = res.arms[a].reconstruction ? on_mode : ReconMode::kNone;
      res.runs[a].push_back(run_experiment(c, data));
    }
  }
  return res;
}

CsvTable ablation_table(const RunConfig& config, const AblationResult& r) {
  CsvTable t;
  t.header = {"type", "self_adaptive", "protective_reconstruction"};
  for (auto s : r.seeds) t.header.push_back("seed_" + std::to_string(s));
  t.header.push_back("mean");
  t.header.push_back("meta");
  const Json meta = artifact_meta(config, kAblationSchema);
  for (std::size_t a = 0; a < r.arms.size(); ++a) {
    std::vector<std::string> row = {r.arms[a].type, r.arms[a].adaptive ? "on" : "off",
                                    r.arms[a].reconstruction ? "on" : "off"};
    for (const auto& run : r.runs[a]) row.push_back(format_double(run.test_accuracy));
    row.push_back(format_double(r.mean_accuracy(a)));
    row.push_back(meta_cell(meta, a));
    t.rows.push_back(std::move(row));
  }
  return t;
}

AblationResult cmd_ablate(const RunConfig& config, const fs::path& out_dir) {
  AblationResult r = run_ablation(config);
  ensure_dir(out_dir);
  write_text(out_dir / "ablation.csv", to_csv(ablation_table(config, r)));
  Json j = artifact_meta(config, kAblationSchema);
  j["runs"] = Json::array();
  for (std::size_t a = 0; a < r.arms.size(); ++a) {
    for (std::size_t s = 0; s < r.seeds.size(); ++s) {
      const auto& run = r.runs[a][s];
      j["runs"].push_back({{"type", r.arms[a].type},
                           {"seed", r.seeds[s]},
                           {"test_accuracy", run.test_accuracy},
                           {"param_ratio_removed", run.compression.param_ratio_removed},
                           {"flops_removed_fraction", run.compression.flops_removed_fraction},
                           {"search_epochs", run.search_epochs},
                           {"status", search_status_name(run.status)}});
    }
  }
  write_text(out_dir / "ablation.json", j.dump(2) + "\n");
  return r;
}

CsvTable wsr_trace(const RunConfig& in) {
  if (!in.prune.uniform_ratio) {
    throw ConfigError("wsr-trace needs a fixed ratio (prune.uniform_ratio or --uniform-ratio)");
  }
  RunConfig config = in;
  config.prune.adaptive = false;
  config.prune.recon_mode = ReconMode::kNone;
  config.schedule.max_finetune_epochs = 0;
  config.schedule.fill_budget = false;
  config.validate();
  const DataPair data = load_data(config);
  Model model = build_model(config.model_spec());

  CsvTable t;
  t.header = {"epoch"};
  for (const auto& n : model.unit_names(true)) t.header.push_back(n);
  t.header.push_back("train_acc");
  t.header.push_back("test_acc");
  t.header.push_back("meta");
  const Json meta = artifact_meta(config, kWsrTraceSchema);

  std::vector<std::string> row0 = {"0"};
  for (const auto* u : model.maskable_units()) row0.push_back(format_double(measure_sparsity(*u).wsr));
  const std::size_t bs = config.schedule.batch_size;
  row0.push_back(format_double(evaluate(model, data.train, bs).accuracy));
  row0.push_back(format_double(evaluate(model, data.test, bs).accuracy));
  row0.push_back(meta_cell(meta, 0));
  t.rows.push_back(std::move(row0));

  PsapRunner runner(std::move(model), config.prune, config.train_schedule(), data.train,
                    data.test);
  const int epochs = config.schedule.max_search_epochs;
  for (int e = 1; e < epochs && !runner.done(); ++e) {
    runner.step_epoch();
    const LogRow& r = runner.state().log.rows().back();
    std::vector<std::string> row = {std::to_string(e)};
    for (const auto& l : r.layers) row.push_back(format_double(l.wsr));
    row.push_back(format_double(r.train_accuracy));
    row.push_back(format_double(r.test_accuracy));
    row.push_back("");
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable cmd_wsr_trace(const RunConfig& config, const fs::path& out_dir) {
  CsvTable t = wsr_trace(config);
  ensure_dir(out_dir);
  write_text(out_dir / "wsr_trace.csv", to_csv(t));
  return t;
}

Model trained_model(const RunConfig& config, const DataPair& data) {
  if (!config.experiments.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(config.experiments.checkpoint);
    if (!(ck.state.model.spec().architecture == config.model.architecture)) {
      throw ConfigError("checkpoint architecture differs from the configured model");
    }
    return std::move(ck.state.model);
  }
  Model model = build_model(config.model_spec());
  TrainSchedule dense = config.train_schedule();
  dense.max_search_epochs = 0;
  dense.max_finetune_epochs = config.experiments.dense_epochs;
  SGDState opt;
  opt.learning_rate = dense.lr_initial;
  opt.momentum = dense.momentum;
  opt.weight_decay = dense.weight_decay;
  opt.clip_max_norm = dense.clip_max_norm;
  train_epochs(model, opt, dense, data.train, 0, dense.max_finetune_epochs, false);
  return model;
}

SensitivityResult sensitivity(const RunConfig& config, const Model& trained,
                              const DataPair& data) {
  const std::string& name = config.experiments.layer;
  if (name.empty() || !trained.find_unit(name) || !trained.find_unit(name)->maskable()) {
    throw ConfigError("unknown layer '" + name + "'; valid layers: " + layer_list(trained));
  }
  SensitivityResult res;
  res.layer = name;
  const std::size_t bs = config.schedule.batch_size;
  Model base = trained;
  res.base_accuracy = evaluate(base, data.test, bs).accuracy;

  TrainSchedule brief = config.train_schedule();
  brief.lr_initial = learning_rate_at(brief, std::max(0, brief.total_epochs() - 1));
  brief.milestones.clear();
  brief.max_search_epochs = 0;
  brief.max_finetune_epochs = config.experiments.sensitivity_finetune_epochs;

  for (double k : config.experiments.ratios) {
    Model m = trained;
    ConvBN* unit = m.find_unit(name);
    const auto pruned = select_prune_indices(filter_l2_norms(unit->conv()), k);
    SensitivityPoint p{k, pruned.size(), res.base_accuracy};
    if (!pruned.empty()) {
      SGDState opt;
      opt.learning_rate = brief.lr_initial;
      opt.momentum = brief.momentum;
      opt.weight_decay = brief.weight_decay;
      opt.clip_max_norm = brief.clip_max_norm;
      unit->set_ratio(k);
      apply_mask(*unit, make_mask(name, unit->out_filters(), pruned), &opt);
      train_epochs(m, opt, brief, data.train, 0, brief.max_finetune_epochs, true);
      p.accuracy = evaluate(m, data.test, bs).accuracy;
    }
    res.points.push_back(p);
  }
  return res;
}

CsvTable cmd_sensitivity(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const DataPair data = load_data(config);
  const Model trained = trained_model(config, data);
  const SensitivityResult r = sensitivity(config, trained, data);
  CsvTable t;
  t.header = {"layer", "ratio", "pruned_filters", "accuracy", "accuracy_drop", "meta"};
  const Json meta = artifact_meta(config, kSensitivitySchema);
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    const auto& p = r.points[i];
    t.rows.push_back({r.layer, format_double(p.ratio), std::to_string(p.pruned_filters),
                      format_double(p.accuracy), format_double(r.base_accuracy - p.accuracy),
                      meta_cell(meta, i)});
  }
  ensure_dir(out_dir);
  write_text(out_dir / "sensitivity.csv", to_csv(t));
  return t;
}

std::vector<GradientArm> gradient_accuracy_pair(const RunConfig& config, const Model& trained,
                                                const DataPair& data, double fraction) {
  const std::size_t bs = config.schedule.batch_size;
  Model base = trained;
  const double before = evaluate(base, data.test, bs).accuracy;
  // The batch that would come next in training.
  const auto order = epoch_order(data.train.size(), config.seed,
                                 static_cast<std::uint64_t>(config.experiments.dense_epochs));
  const std::size_t n = std::min(bs, order.size());
  const Batch batch = make_batch(data.train, std::span<const std::size_t>(order).first(n));

  std::vector<GradientArm> arms;
  for (PruneHalf half : {PruneHalf::kLower, PruneHalf::kUpper}) {
    Model m = trained;
    GradientArm arm;
    arm.seed = config.seed;
    arm.half = half;
    arm.accuracy_before = before;
    for (auto* u : m.maskable_units()) {
      auto norms = filter_l2_norms(u->conv());
      if (half == PruneHalf::kUpper) {
        for (double& v : norms) v = -v;  // largest norms first
      }
      const auto pruned = select_prune_indices(norms, fraction);
      arm.pruned_filters += pruned.size();
      apply_mask(*u, make_mask(u->name(), u->out_filters(), pruned), nullptr);
    }
    arm.accuracy_after = evaluate(m, data.test, bs).accuracy;
    arm.max_grad = compute_gradients(m, batch).stats.max_abs_grad;
    arms.push_back(arm);
  }
  return arms;
}

CsvTable cmd_gradient_accuracy(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  CsvTable t;
  t.header = {"seed",  "arm", "pruned_fraction", "pruned_filters", "max_grad", "accuracy_before",
              "accuracy_after", "accuracy_drop", "meta"};
  const Json meta = artifact_meta(config, kGradientSchema);
  for (std::uint64_t seed : seed_list(config)) {
    const RunConfig c = with_seed(config, seed);
    const DataPair data = load_data(c);
    const Model trained = trained_model(c, data);
    for (const auto& a : gradient_accuracy_pair(c, trained, data, c.experiments.prune_fraction)) {
      t.rows.push_back({std::to_string(a.seed), a.half == PruneHalf::kLower ? "lower" : "upper",
                        format_double(c.experiments.prune_fraction),
                        std::to_string(a.pruned_filters), format_double(a.max_grad),
                        format_double(a.accuracy_before), format_double(a.accuracy_after),
                        format_double(a.accuracy_drop()), meta_cell(meta, t.rows.size())});
    }
  }
  ensure_dir(out_dir);
  write_text(out_dir / "gradient_accuracy.csv", to_csv(t));
  return t;
}

Json cmd_inspect(const fs::path& checkpoint) {
  Json h = read_checkpoint_header(checkpoint);
  Json out;
  for (const char* key : {"format_version", "tool_version", "model_spec", "state", "optimizer",
                          "rng", "units", "config"}) {
    if (h.contains(key)) out[key] = h[key];
  }
  if (out.contains("optimizer")) out["optimizer"].erase("velocity");
  out["parameters"] = h.value("parameters", Json::array()).size();
  out["log_rows"] = h.value("log", Json::array()).size();
  if (h.contains("log") && !h["log"].empty()) {
    const Json& last = h["log"].back();
    out["last_epoch"] = {{"epoch", last["epoch"]},
                         {"phase", last["phase"]},
                         {"test_acc", last["test_acc"]},
                         {"param_ratio_removed", last["param_ratio_removed"]},
                         {"flops_removed_fraction", last["flops_removed_fraction"]}};
  }
  return out;
}

}  // namespace psap
