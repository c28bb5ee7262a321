// SPDX-License-Identifier: Apache-2.0
#include "psap/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "psap/errors.hpp"
#include "psap/models.hpp"

namespace psap {

namespace {

class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void read(const std::string& key, double& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) throw type_error(key, "a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, std::optional<double>& out) {
    if (const Json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      if (!v->is_number()) throw type_error(key, "a number or null");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, std::size_t& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
        throw type_error(key, "a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }
  void read(const std::string& key, std::uint64_t& out, int /*tag*/) {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned()) throw type_error(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void read(const std::string& key, int& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_integer()) throw type_error(key, "an integer");
      out = v->get<int>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) throw type_error(key, "true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw type_error(key, "a string");
      out = v->get<std::string>();
    }
  }
  void read(const std::string& key, std::vector<double>& out) {
    if (const Json* v = find(key)) {
      if (!v->is_array()) throw type_error(key, "an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) throw type_error(key, "an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  template <typename E, typename Parse>
  void read_enum(const std::string& key, E& out, Parse parse) {
    std::string s;
    if (find(key)) {
      read(key, s);
      try {
        out = parse(s);
      } catch (const ConfigError& e) {
        throw ConfigError(key_path(key) + ": " + e.what());
      }
    }
  }

  /// Rejects keys that were never looked up.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + key_path(it.key()) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  ConfigError type_error(const std::string& key, const char* expected) const {
    return ConfigError(key_path(key) + ": expected " + expected);
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json to_json(const ModelSpec& s) {
  return Json{{"architecture", architecture_name(s.architecture)},
              {"blocks", s.blocks},
              {"in_channels", s.in_channels},
              {"height", s.height},
              {"width", s.width},
              {"classes", s.classes},
              {"base_width", s.base_width},
              {"seed", s.seed}};
}

namespace {

void read_model(ObjectReader& r, ModelSpec& s) {
  r.read_enum("architecture", s.architecture, parse_architecture);
  r.read("blocks", s.blocks);
  r.read("in_channels", s.in_channels);
  r.read("height", s.height);
  r.read("width", s.width);
  r.read("classes", s.classes);
  r.read("base_width", s.base_width);
}

}  // namespace

ModelSpec model_spec_from_json(const Json& j) {
  ModelSpec s;
  ObjectReader r(j, "model");
  read_model(r, s);
  r.read("seed", s.seed, 0);
  r.finish();
  return s;
}

Json to_json(const RunConfig& c) {
  Json model = to_json(c.model);
  model.erase("seed");
  const auto& sy = c.data.synthetic;
  Json synthetic{{"classes", sy.classes},   {"size", sy.size},
                 {"channels", sy.channels}, {"height", sy.height},
                 {"width", sy.width},       {"separability", sy.separability},
                 {"noise", sy.noise},       {"max_shift", sy.max_shift}};
  if (!c.data.seed_from_run) synthetic["seed"] = sy.seed;
  const auto& p = c.prune;
  const auto& t = c.schedule;
  const auto& e = c.experiments;
  return Json{
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"model", model},
      {"data",
       {{"source", c.data.source},
        {"path", c.data.path},
        {"synthetic", synthetic},
        {"test_size", c.data.test_size}}},
      {"prune",
       {{"tau", p.tau},
        {"s_min", p.s_min},
        {"delta", p.delta},
        {"k_init", p.k_init},
        {"recon", recon_mode_name(p.recon_mode)},
        {"adaptive", p.adaptive},
        {"uniform_ratio", optional_json(p.uniform_ratio)},
        {"target", target_metric_name(p.target)},
        {"detect", detect_variant_name(p.detect)},
        {"threshold_pool", threshold_pool_name(p.threshold_pool)}}},
      {"schedule",
       {{"search_epochs", t.max_search_epochs},
        {"finetune_epochs", t.max_finetune_epochs},
        {"lr", t.lr_initial},
        {"lr_decay", lr_decay_name(t.lr_decay)},
        {"milestones", t.milestones},
        {"decay_factor", t.decay_factor},
        {"batch_size", t.batch_size},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"clip_max_norm", optional_json(t.clip_max_norm)},
        {"augment", t.augment},
        {"fill_budget", t.fill_budget}}},
      {"experiments",
       {{"seeds", e.seeds},
        {"checkpoint", e.checkpoint},
        {"dense_epochs", e.dense_epochs},
        {"layer", e.layer},
        {"ratios", e.ratios},
        {"sensitivity_finetune_epochs", e.sensitivity_finetune_epochs},
        {"prune_fraction", e.prune_fraction}}}};
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  ObjectReader root(j, "");
  root.read("seed", c.seed, 0);
  root.read("out_dir", c.out_dir);
  if (const Json* m = root.find("model")) {
    ObjectReader r(*m, "model");
    read_model(r, c.model);
    r.finish();
  }
  if (const Json* d = root.find("data")) {
    ObjectReader r(*d, "data");
    r.read("source", c.data.source);
    r.read("path", c.data.path);
    r.read("test_size", c.data.test_size);
    if (const Json* s = r.find("synthetic")) {
      ObjectReader sr(*s, "data.synthetic");
      auto& sy = c.data.synthetic;
      sr.read("classes", sy.classes);
      sr.read("size", sy.size);
      sr.read("channels", sy.channels);
      sr.read("height", sy.height);
      sr.read("width", sy.width);
      sr.read("separability", sy.separability);
      sr.read("noise", sy.noise);
      sr.read("max_shift", sy.max_shift);
      if (sr.find("seed")) {
        sr.read("seed", sy.seed, 0);
        c.data.seed_from_run = false;
      }
      sr.finish();
    }
    r.finish();
  }
  if (const Json* p = root.find("prune")) {
    ObjectReader r(*p, "prune");
    auto& pc = c.prune;
    r.read("tau", pc.tau);
    r.read("s_min", pc.s_min);
    r.read("delta", pc.delta);
    r.read("k_init", pc.k_init);
    r.read_enum("recon", pc.recon_mode, parse_recon_mode);
    r.read("adaptive", pc.adaptive);
    r.read("uniform_ratio", pc.uniform_ratio);
    r.read_enum("target", pc.target, parse_target_metric);
    r.read_enum("detect", pc.detect, parse_detect_variant);
    r.read_enum("threshold_pool", pc.threshold_pool, parse_threshold_pool);
    r.finish();
  }
  if (const Json* s = root.find("schedule")) {
    ObjectReader r(*s, "schedule");
    auto& t = c.schedule;
    r.read("search_epochs", t.max_search_epochs);
    r.read("finetune_epochs", t.max_finetune_epochs);
    r.read("lr", t.lr_initial);
    r.read_enum("lr_decay", t.lr_decay, parse_lr_decay);
    r.read("milestones", t.milestones);
    r.read("decay_factor", t.decay_factor);
    r.read("batch_size", t.batch_size);
    r.read("momentum", t.momentum);
    r.read("weight_decay", t.weight_decay);
    r.read("clip_max_norm", t.clip_max_norm);
    r.read("augment", t.augment);
    r.read("fill_budget", t.fill_budget);
    r.finish();
  }
  if (const Json* e = root.find("experiments")) {
    ObjectReader r(*e, "experiments");
    auto& x = c.experiments;
    r.read("seeds", x.seeds);
    r.read("checkpoint", x.checkpoint);
    r.read("dense_epochs", x.dense_epochs);
    r.read("layer", x.layer);
    r.read("ratios", x.ratios);
    r.read("sensitivity_finetune_epochs", x.sensitivity_finetune_epochs);
    r.read("prune_fraction", x.prune_fraction);
    r.finish();
  }
  root.finish();
  return c;
}

Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // Translate the byte offset into a line/column pair.
    std::size_t line = 1, col = 1;
    const std::size_t limit = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": invalid JSON (" + e.what() + ")");
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const Json j = parse_json_text(ss.str(), path.string());
  try {
    return run_config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ModelSpec RunConfig::model_spec() const {
  ModelSpec s = model;
  s.seed = seed;
  return s;
}

TrainSchedule RunConfig::train_schedule() const {
  TrainSchedule t = schedule;
  t.seed = seed;
  return t;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s = data.synthetic;
  if (data.seed_from_run) s.seed = seed;
  return s;
}

void RunConfig::validate() const {
  prune.validate();
  schedule.validate();
  if (data.source != "synthetic" && data.source != "cifar10") {
    throw ConfigError("data.source must be synthetic or cifar10");
  }
  if (data.source == "cifar10") {
    if (data.path.empty()) throw ConfigError("data.path is required for cifar10");
    if (model.in_channels != 3 || model.height != 32 || model.width != 32 || model.classes != 10) {
      throw ConfigError("cifar10 needs a 3x32x32 input, 10-class model");
    }
  } else {
    const auto& s = data.synthetic;
    if (s.classes == 0 || s.size < s.classes) {
      throw ConfigError("data.synthetic.size must be at least data.synthetic.classes");
    }
    if (s.channels != model.in_channels || s.height != model.height || s.width != model.width ||
        s.classes != model.classes) {
      throw ConfigError("data.synthetic shape does not match the model input/classes");
    }
    if (data.test_size == 0) throw ConfigError("data.test_size must be positive");
    if (!(s.noise >= 0.0)) throw ConfigError("data.synthetic.noise must be non-negative");
  }
  if (experiments.seeds < 1) throw ConfigError("experiments.seeds must be at least 1");
  if (experiments.dense_epochs < 0 || experiments.sensitivity_finetune_epochs < 0) {
    throw ConfigError("experiment epoch counts must be non-negative");
  }
  if (!(experiments.prune_fraction >= 0.0 && experiments.prune_fraction <= 0.5)) {
    throw ConfigError("experiments.prune_fraction must lie in [0, 0.5]");
  }
  for (double r : experiments.ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("experiments.ratios must lie in [0, 1]");
  }
  validate_model_spec(model_spec());
}

}  // namespace psap
