// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "psap/layers.hpp"

namespace psap {

enum class Architecture { kCnnSmall, kResnetTiny, kMlpProbe };

std::string_view architecture_name(Architecture a);
Architecture parse_architecture(std::string_view name);

struct ModelSpec {
  Architecture architecture = Architecture::kResnetTiny;
  std::size_t blocks = 3;  // residual blocks per stage (resnet_tiny only)
  std::size_t in_channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t classes = 10;
  std::size_t base_width = 16;  // channels of the first stage
  std::uint64_t seed = 0;       // initializer seed

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// A classifier network: a layer stack producing logits plus registries of
/// its parameters, buffers and conv+bn units (in forward execution order).
class Model {
 public:
  Model(ModelSpec spec, std::unique_ptr<Sequential> body);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& grad_logits);
  void zero_grad();

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Parameter*>& parameters() const { return params_; }
  const std::vector<Tensor*>& buffers() const { return buffers_; }
  const std::vector<ConvBN*>& units() const { return units_; }
  std::vector<ConvBN*> maskable_units() const;
  ConvBN* find_unit(std::string_view name) const;
  std::vector<std::string> unit_names(bool maskable_only) const;

  /// Records the name of every unit as it executes; pass nullptr to stop.
  void set_trace(std::vector<std::string>* trace);

  /// Copies parameter values, buffers, masks and ratios from a model of the
  /// same structure. Throws ShapeError otherwise.
  void copy_state_from(const Model& other);

 private:
  void reindex();

  ModelSpec spec_;
  std::unique_ptr<Sequential> body_;
  std::vector<Parameter*> params_;
  std::vector<Tensor*> buffers_;
  std::vector<ConvBN*> units_;
};

}  // namespace psap
