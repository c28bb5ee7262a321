// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "psap/ops.hpp"
#include "psap/tensor.hpp"

namespace psap {

class ConvBN;

/// A differentiable block. backward() must follow a training-mode forward()
/// on the same instance and accumulates parameter gradients.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  virtual void collect_parameters(std::vector<Parameter*>& /*out*/) {}
  virtual void collect_buffers(std::vector<Tensor*>& /*out*/) {}
  virtual void collect_units(std::vector<ConvBN*>& /*out*/) {}
};

/// Per-filter keep bits of one conv layer (true = kept).
struct FilterMask {
  std::string layer_id;
  std::vector<bool> kept;

  std::size_t pruned_count() const;
  bool is_kept(std::size_t f) const { return kept.at(f); }
};

/// Convolution followed by its own batchnorm: the unit the pruner works on.
/// Also carries the layer's pruning state (mask and current ratio).
class ConvBN final : public Layer {
 public:
  ConvBN(std::string name, std::size_t in_channels, std::size_t out_filters, std::size_t kernel,
         std::size_t stride, std::size_t padding, bool maskable);

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;
  void collect_units(std::vector<ConvBN*>& out) override;

  const std::string& name() const { return name_; }
  bool maskable() const { return maskable_; }
  ConvParams& conv() { return conv_; }
  const ConvParams& conv() const { return conv_; }
  BNParams& bn() { return bn_; }
  const BNParams& bn() const { return bn_; }
  std::size_t out_filters() const { return conv_.out_filters(); }

  FilterMask& mask() { return mask_; }
  const FilterMask& mask() const { return mask_; }
  double ratio() const { return ratio_; }
  void set_ratio(double k) { ratio_ = k; }

  /// Registry index of the unit whose (activated) output is this unit's only
  /// input, or -1 when the input is shared or summed.
  int producer() const { return producer_; }
  void set_producer(int idx) { producer_ = idx; }

  /// Output spatial extent seen by the most recent forward (or set at build).
  std::size_t out_h() const { return out_h_; }
  std::size_t out_w() const { return out_w_; }
  void set_output_extent(std::size_t h, std::size_t w) {
    out_h_ = h;
    out_w_ = w;
  }

  void set_trace(std::vector<std::string>* trace) { trace_ = trace; }

 private:
  std::string name_;
  ConvParams conv_;
  BNParams bn_;
  bool maskable_;
  FilterMask mask_;
  double ratio_ = 0.0;
  int producer_ = -1;
  std::size_t out_h_ = 0, out_w_ = 0;
  std::vector<std::string>* trace_ = nullptr;

  Tensor input_;
  std::optional<BNCache> cache_;
};

class ReLU final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(); }

 private:
  Tensor input_;
};

/// [N,C,H,W] -> [N,C]
class GlobalAvgPool final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(); }

 private:
  Shape input_shape_;
};

/// [N,...] -> [N, prod(...)]
class Flatten final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(); }

 private:
  Shape input_shape_;
};

class Linear final : public Layer {
 public:
  Linear(std::string name, std::size_t in, std::size_t out);

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override;
  void collect_parameters(std::vector<Parameter*>& out) override;

  LinearParams& params() { return params_; }
  const LinearParams& params() const { return params_; }

 private:
  LinearParams params_;
  Tensor input_;
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential&) = delete;

  Sequential& add(std::unique_ptr<Layer> layer);
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;
  void collect_units(std::vector<ConvBN*>& out) override;

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Post-activation basic block: relu(bn2(conv2(relu(bn1(conv1 x)))) + shortcut(x)).
/// The shortcut is the identity or a 1x1 projection conv + bn.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(const std::string& prefix, std::size_t in_channels, std::size_t out_channels,
                std::size_t stride);
  ResidualBlock(const ResidualBlock& other);

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;
  void collect_units(std::vector<ConvBN*>& out) override;

  ConvBN& conv1() { return conv1_; }
  ConvBN& conv2() { return conv2_; }
  ConvBN* shortcut() { return shortcut_ ? &*shortcut_ : nullptr; }

 private:
  ConvBN conv1_;
  ConvBN conv2_;
  std::optional<ConvBN> shortcut_;
  Tensor hidden_;  // conv1 branch pre-activation
  Tensor sum_;     // pre-activation of the block output
};

}  // namespace psap
