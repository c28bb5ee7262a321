// SPDX-License-Identifier: Apache-2.0
#include "psap/models.hpp"

#include <cmath>
#include <random>

#include "psap/errors.hpp"

namespace psap {

double kaiming_std(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

void validate_model_spec(const ModelSpec& s) {
  if (s.in_channels == 0 || s.height == 0 || s.width == 0) {
    throw ConfigError("model input shape must be positive");
  }
  if (s.classes < 2) throw ConfigError("model needs at least 2 classes");
  if (s.base_width == 0) throw ConfigError("model base_width must be positive");
  if (s.architecture == Architecture::kResnetTiny) {
    if (s.blocks == 0) throw ConfigError("resnet_tiny needs at least one block per stage");
    if (s.height < 4 || s.width < 4) throw ConfigError("resnet_tiny needs inputs of at least 4x4");
  }
  if (s.architecture == Architecture::kCnnSmall && (s.height < 4 || s.width < 4)) {
    throw ConfigError("cnn_small needs inputs of at least 4x4");
  }
}

namespace {

std::unique_ptr<Sequential> cnn_small(const ModelSpec& s) {
  auto body = std::make_unique<Sequential>();
  const std::size_t w = s.base_width;
  body->emplace<ConvBN>("conv1", s.in_channels, w, 3, 1, 1, true);
  body->emplace<ReLU>();
  body->emplace<ConvBN>("conv2", w, 2 * w, 3, 2, 1, true);
  body->emplace<ReLU>();
  body->emplace<ConvBN>("conv3", 2 * w, 4 * w, 3, 2, 1, true);
  body->emplace<ReLU>();
  body->emplace<GlobalAvgPool>();
  body->emplace<Linear>("head", 4 * w, s.classes);
  return body;
}

std::unique_ptr<Sequential> resnet_tiny(const ModelSpec& s) {
  auto body = std::make_unique<Sequential>();
  const std::size_t w = s.base_width;
  body->emplace<ConvBN>("stem", s.in_channels, w, 3, 1, 1, true);
  body->emplace<ReLU>();
  std::size_t in = w;
  for (std::size_t stage = 0; stage < 3; ++stage) {
    const std::size_t out = w << stage;
    for (std::size_t b = 0; b < s.blocks; ++b) {
      const std::size_t stride = (stage > 0 && b == 0) ? 2 : 1;
      const std::string prefix = "layer" + std::to_string(stage + 1) + "." + std::to_string(b);
      body->emplace<ResidualBlock>(prefix, in, out, stride);
      in = out;
    }
  }
  body->emplace<GlobalAvgPool>();
  body->emplace<Linear>("head", in, s.classes);
  return body;
}

std::unique_ptr<Sequential> mlp_probe(const ModelSpec& s) {
  auto body = std::make_unique<Sequential>();
  body->emplace<Flatten>();
  body->emplace<Linear>("head", s.in_channels * s.height * s.width, s.classes);
  return body;
}

int unit_index(const Model& m, const std::string& name) {
  const auto& units = m.units();
  for (std::size_t i = 0; i < units.size(); ++i)
    if (units[i]->name() == name) return static_cast<int>(i);
  return -1;
}

void wire_producers(Model& m) {
  for (auto* u : m.units()) {
    const std::string& n = u->name();
    if (n == "conv2") u->set_producer(unit_index(m, "conv1"));
    if (n == "conv3") u->set_producer(unit_index(m, "conv2"));
    if (n == "layer1.0.conv1") u->set_producer(unit_index(m, "stem"));
    const auto dot = n.rfind(".conv2");
    if (dot != std::string::npos && dot + 6 == n.size() && n.rfind("layer", 0) == 0) {
      u->set_producer(unit_index(m, n.substr(0, dot) + ".conv1"));
    }
  }
}

void initialize(Model& m, std::uint64_t seed) {
  for (auto* p : m.parameters()) {
    auto& t = p->value;
    const bool conv_weight = t.rank() == 4;
    const bool linear_weight = t.rank() == 2;
    if (!conv_weight && !linear_weight) continue;
    Rng rng = make_rng(seed, Stream::kInit, {p->index});
    const std::size_t fan_in = t.size() / t.dim(0);
    const double sd = conv_weight ? kaiming_std(fan_in) : 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::normal_distribution<double> dist(0.0, sd);
    for (auto& v : t.values()) v = dist(rng);
  }
  // Biases of linear layers and bn shifts stay at zero; bn scales at one.
}

}  // namespace

Model build_model(const ModelSpec& spec) {
  validate_model_spec(spec);
  std::unique_ptr<Sequential> body;
  switch (spec.architecture) {
    case Architecture::kCnnSmall:
      body = cnn_small(spec);
      break;
    case Architecture::kResnetTiny:
      body = resnet_tiny(spec);
      break;
    case Architecture::kMlpProbe:
      body = mlp_probe(spec);
      break;
  }
  if (!body) throw ConfigError("unsupported architecture");
  Model model(spec, std::move(body));
  wire_producers(model);
  initialize(model, spec.seed);
  // One inference pass records each unit's output extent for FLOPs accounting.
  model.forward(Tensor({1, spec.in_channels, spec.height, spec.width}), false);
  return model;
}

void reinitialize_filter(ConvBN& unit, std::size_t filter, Rng& rng) {
  if (filter >= unit.out_filters()) throw ContractError("filter index out of range");
  const std::size_t len = unit.conv().filter_size();
  std::normal_distribution<double> dist(0.0, kaiming_std(len));
  auto w = unit.conv().weights.value.data();
  for (std::size_t j = 0; j < len; ++j) w[filter * len + j] = dist(rng);
  unit.bn().gamma.value[filter] = 1.0;
  unit.bn().beta.value[filter] = 0.0;
}

}  // namespace psap
