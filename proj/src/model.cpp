// SPDX-License-Identifier: Apache-2.0
#include "psap/model.hpp"

#include "psap/errors.hpp"

namespace psap {

std::string_view architecture_name(Architecture a) {
  switch (a) {
    case Architecture::kCnnSmall:
      return "cnn_small";
    case Architecture::kResnetTiny:
      return "resnet_tiny";
    case Architecture::kMlpProbe:
      return "mlp_probe";
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "cnn_small") return Architecture::kCnnSmall;
  if (name == "resnet_tiny") return Architecture::kResnetTiny;
  if (name == "mlp_probe") return Architecture::kMlpProbe;
  throw ConfigError("unsupported architecture '" + std::string(name) +
                    "' (expected cnn_small, resnet_tiny or mlp_probe)");
}

Model::Model(ModelSpec spec, std::unique_ptr<Sequential> body)
    : spec_(spec), body_(std::move(body)) {
  reindex();
}

Model::Model(const Model& other)
    : spec_(other.spec_), body_(std::make_unique<Sequential>(*other.body_)) {
  reindex();
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    spec_ = other.spec_;
    body_ = std::make_unique<Sequential>(*other.body_);
    reindex();
  }
  return *this;
}

void Model::reindex() {
  params_.clear();
  buffers_.clear();
  units_.clear();
  body_->collect_parameters(params_);
  body_->collect_buffers(buffers_);
  body_->collect_units(units_);
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->index = i;
}

Tensor Model::forward(const Tensor& x, bool training) { return body_->forward(x, training); }

Tensor Model::backward(const Tensor& grad_logits) { return body_->backward(grad_logits); }

void Model::zero_grad() {
  for (auto* p : params_) p->value.zero_grad();
}

std::vector<ConvBN*> Model::maskable_units() const {
  std::vector<ConvBN*> out;
  for (auto* u : units_)
    if (u->maskable()) out.push_back(u);
  return out;
}

ConvBN* Model::find_unit(std::string_view name) const {
  for (auto* u : units_)
    if (u->name() == name) return u;
  return nullptr;
}

std::vector<std::string> Model::unit_names(bool maskable_only) const {
  std::vector<std::string> out;
  for (auto* u : units_)
    if (!maskable_only || u->maskable()) out.push_back(u->name());
  return out;
}

void Model::set_trace(std::vector<std::string>* trace) {
  for (auto* u : units_) u->set_trace(trace);
}

void Model::copy_state_from(const Model& other) {
  if (other.params_.size() != params_.size() || other.units_.size() != units_.size() ||
      other.buffers_.size() != buffers_.size()) {
    throw ShapeError("copy_state_from: model structures differ");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i]->value.shape() != other.params_[i]->value.shape()) {
      throw ShapeError("copy_state_from: parameter " + params_[i]->name + " shape differs");
    }
    params_[i]->value.values() = other.params_[i]->value.values();
  }
  for (std::size_t i = 0; i < buffers_.size(); ++i) {
    buffers_[i]->values() = other.buffers_[i]->values();
  }
  for (std::size_t i = 0; i < units_.size(); ++i) {
    units_[i]->mask() = other.units_[i]->mask();
    units_[i]->set_ratio(other.units_[i]->ratio());
  }
}

}  // namespace psap
