// SPDX-License-Identifier: Apache-2.0
#include "psap/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "psap/errors.hpp"
#include "psap/models.hpp"

namespace psap {

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(out, bits);
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : b_(b) {}

  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                        std::to_string(pos_));
    }
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    const std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint8_t byte(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  bool at_end() const { return pos_ == b_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json shape_json(const Shape& s) { return Json(s); }

Json header_json(const Json& config, const RunState& st) {
  const Model& m = st.model;
  Json params = Json::array();
  for (const auto* p : m.parameters()) {
    params.push_back({{"name", p->name}, {"shape", shape_json(p->value.shape())}});
  }
  Json buffers = Json::array();
  for (const auto* b : m.buffers()) buffers.push_back(shape_json(b->shape()));
  Json units = Json::array();
  for (const auto* u : m.maskable_units()) {
    units.push_back({{"name", u->name()}, {"filters", u->out_filters()}, {"ratio", u->ratio()}});
  }
  Json velocity = Json::array();
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    velocity.push_back(i < st.optimizer.velocity.size() && !st.optimizer.velocity[i].empty());
  }
  Json log = Json::array();
  for (const auto& r : st.log.rows()) log.push_back(log_row_to_json(r));
  return Json{
      {"format_version", kCheckpointVersion},
      {"tool_version", kToolVersion},
      {"config", config},
      {"model_spec", to_json(m.spec())},
      {"parameters", params},
      {"buffers", buffers},
      {"units", units},
      {"optimizer",
       {{"learning_rate", st.optimizer.learning_rate},
        {"momentum", st.optimizer.momentum},
        {"weight_decay", st.optimizer.weight_decay},
        {"clip_max_norm", optional_json(st.optimizer.clip_max_norm)},
        {"velocity", velocity}}},
      // Every random stream is derived from (seed, epoch, ...), so the seed and
      // the epoch cursor are the complete generator state.
      {"rng", {{"scheme", "derived-splitmix64/mt19937_64"}, {"seed", m.spec().seed}}},
      {"state",
       {{"epoch", st.epoch},
        {"phase", phase_name(st.phase)},
        {"search_epochs", st.search_epochs},
        {"finetune_epochs", st.finetune_epochs},
        {"status", search_status_name(st.status)},
        {"uniform_ratio", st.uniform_ratio}}},
      {"log", log}};
}

}  // namespace

Json log_row_to_json(const LogRow& r) {
  Json layers = Json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"layer", l.layer}, {"wsr", l.wsr}, {"k", l.k}, {"abnormal", l.abnormal}});
  }
  return Json{{"epoch", r.epoch},
              {"phase", phase_name(r.phase)},
              {"lr", r.learning_rate},
              {"train_loss", r.train_loss},
              {"train_acc", r.train_accuracy},
              {"test_loss", r.test_loss},
              {"test_acc", r.test_accuracy},
              {"param_ratio_removed", r.param_ratio_removed},
              {"flops_removed_fraction", r.flops_removed_fraction},
              {"max_grad", r.max_grad},
              {"wall_time", r.wall_time},
              {"layers", layers}};
}

LogRow log_row_from_json(const Json& j) {
  try {
    LogRow r;
    r.epoch = j.at("epoch").get<int>();
    r.phase = parse_phase(j.at("phase").get<std::string>());
    r.learning_rate = j.at("lr").get<double>();
    r.train_loss = j.at("train_loss").get<double>();
    r.train_accuracy = j.at("train_acc").get<double>();
    r.test_loss = j.at("test_loss").get<double>();
    r.test_accuracy = j.at("test_acc").get<double>();
    r.param_ratio_removed = j.at("param_ratio_removed").get<double>();
    r.flops_removed_fraction = j.at("flops_removed_fraction").get<double>();
    r.max_grad = j.at("max_grad").get<double>();
    r.wall_time = j.at("wall_time").get<double>();
    for (const auto& l : j.at("layers")) {
      r.layers.push_back({l.at("layer").get<std::string>(), l.at("wsr").get<double>(),
                          l.at("k").get<double>(), l.at("abnormal").get<std::size_t>()});
    }
    return r;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed log row: ") + e.what());
  }
}

std::vector<std::uint8_t> serialize_checkpoint(const Json& config, const RunState& st) {
  const std::string header = header_json(config, st).dump();
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  const Model& m = st.model;
  for (const auto* p : m.parameters())
    for (double v : p->value.data()) put_f64(out, v);
  for (const auto* b : m.buffers())
    for (double v : b->data()) put_f64(out, v);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    if (i < st.optimizer.velocity.size() && !st.optimizer.velocity[i].empty()) {
      for (double v : st.optimizer.velocity[i].data()) put_f64(out, v);
    }
  }
  for (const auto* u : m.maskable_units()) {
    const auto& kept = u->mask().kept;
    std::vector<std::uint8_t> bits((kept.size() + 7) / 8, 0);
    for (std::size_t f = 0; f < kept.size(); ++f)
      if (kept[f]) bits[f / 8] |= static_cast<std::uint8_t>(1u << (f % 8));
    out.insert(out.end(), bits.begin(), bits.end());
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader in(bytes);
  if (in.bytes(8, "magic") != std::string(kCheckpointMagic, 8)) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  const std::uint32_t version = in.u32("format version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t header_len = in.u64("header length");
  if (header_len > bytes.size()) throw FormatError("checkpoint header length exceeds file size");
  Json h;
  try {
    h = Json::parse(in.bytes(header_len, "header"));
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  try {
    Model model = build_model(model_spec_from_json(h.at("model_spec")));
    const auto& params = model.parameters();
    const auto& hp = h.at("parameters");
    if (hp.size() != params.size()) throw FormatError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (hp[i].at("name").get<std::string>() != params[i]->name ||
          hp[i].at("shape").get<Shape>() != params[i]->value.shape()) {
        throw FormatError("checkpoint parameter " + std::to_string(i) + " does not match " +
                          params[i]->name);
      }
      for (double& v : params[i]->value.values()) v = in.f64("parameters");
    }
    const auto& hb = h.at("buffers");
    if (hb.size() != model.buffers().size()) throw FormatError("checkpoint buffer count mismatch");
    for (std::size_t i = 0; i < model.buffers().size(); ++i) {
      if (hb[i].get<Shape>() != model.buffers()[i]->shape()) {
        throw FormatError("checkpoint buffer " + std::to_string(i) + " shape mismatch");
      }
      for (double& v : model.buffers()[i]->values()) v = in.f64("buffers");
    }

    const auto& ho = h.at("optimizer");
    SGDState opt;
    opt.learning_rate = ho.at("learning_rate").get<double>();
    opt.momentum = ho.at("momentum").get<double>();
    opt.weight_decay = ho.at("weight_decay").get<double>();
    if (!ho.at("clip_max_norm").is_null()) opt.clip_max_norm = ho.at("clip_max_norm").get<double>();
    else opt.clip_max_norm.reset();
    const auto& hv = ho.at("velocity");
    if (hv.size() != params.size()) throw FormatError("checkpoint velocity count mismatch");
    opt.velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!hv[i].get<bool>()) continue;
      Tensor v(params[i]->value.shape());
      for (double& x : v.values()) x = in.f64("velocity");
      opt.velocity[i] = std::move(v);
    }

    const auto units = model.maskable_units();
    const auto& hu = h.at("units");
    if (hu.size() != units.size()) throw FormatError("checkpoint unit count mismatch");
    for (std::size_t l = 0; l < units.size(); ++l) {
      auto* u = units[l];
      if (hu[l].at("name").get<std::string>() != u->name() ||
          hu[l].at("filters").get<std::size_t>() != u->out_filters()) {
        throw FormatError("checkpoint unit " + u->name() + " mismatch");
      }
      u->set_ratio(hu[l].at("ratio").get<double>());
      const std::size_t f = u->out_filters();
      std::vector<std::uint8_t> bits((f + 7) / 8);
      for (auto& b : bits) b = in.byte("mask bitmaps");
      for (std::size_t i = 0; i < f; ++i) u->mask().kept[i] = (bits[i / 8] >> (i % 8)) & 1u;
    }
    if (!in.at_end()) {
      throw FormatError("checkpoint has " + std::to_string(bytes.size() - in.pos()) +
                        " unexpected trailing bytes");
    }

    const auto& hs = h.at("state");
    RunState st{std::move(model), std::move(opt), hs.at("epoch").get<int>(),
                parse_phase(hs.at("phase").get<std::string>()), hs.at("search_epochs").get<int>(),
                hs.at("finetune_epochs").get<int>(),
                parse_search_status(hs.at("status").get<std::string>()),
                hs.at("uniform_ratio").get<double>(), {}};
    for (const auto& r : h.at("log")) st.log.append(log_row_from_json(r));
    return Checkpoint{h.at("config"), std::move(st)};
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint model spec invalid: ") + e.what());
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void save_checkpoint(const std::filesystem::path& path, const Json& config, const RunState& state) {
  const auto bytes = serialize_checkpoint(config, state);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file_bytes(path));
}

Json read_checkpoint_header(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader in(bytes);
  if (in.bytes(8, "magic") != std::string(kCheckpointMagic, 8)) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  const std::uint32_t version = in.u32("format version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t len = in.u64("header length");
  if (len > bytes.size()) throw FormatError("checkpoint header length exceeds file size");
  try {
    return Json::parse(in.bytes(len, "header"));
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
}

}  // namespace psap
