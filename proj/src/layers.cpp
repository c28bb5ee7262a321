// SPDX-License-Identifier: Apache-2.0
#include "psap/layers.hpp"

#include <algorithm>

#include "psap/errors.hpp"

namespace psap {

std::size_t FilterMask::pruned_count() const {
  return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), false));
}

ConvBN::ConvBN(std::string name, std::size_t in_channels, std::size_t out_filters,
               std::size_t kernel, std::size_t stride, std::size_t padding, bool maskable)
    : name_(std::move(name)), maskable_(maskable) {
  if (in_channels == 0 || out_filters == 0 || kernel == 0) {
    throw ConfigError("conv layer " + name_ + " needs positive channel and kernel sizes");
  }
  conv_.weights.name = name_ + ".weight";
  conv_.weights.value = Tensor({out_filters, in_channels, kernel, kernel});
  conv_.weights.value.enable_grad();
  conv_.stride = stride;
  conv_.padding = padding;
  bn_ = BNParams::identity(out_filters);
  bn_.gamma.name = name_ + ".gamma";
  bn_.beta.name = name_ + ".beta";
  mask_.layer_id = name_;
  mask_.kept.assign(out_filters, true);
}

Tensor ConvBN::forward(const Tensor& x, bool training) {
  if (trace_) trace_->push_back(name_);
  Tensor y = conv2d_forward(x, conv_);
  out_h_ = y.dim(2);
  out_w_ = y.dim(3);
  if (training) {
    input_ = x;
    BNCache cache;
    Tensor z = batchnorm_forward(y, bn_, true, &cache);
    cache_ = std::move(cache);
    return z;
  }
  return batchnorm_forward(y, bn_, false);
}

Tensor ConvBN::backward(const Tensor& grad_out) {
  Tensor dy = batchnorm_backward(grad_out, bn_, cache_);
  return conv2d_backward(input_, conv_, dy);
}

std::unique_ptr<Layer> ConvBN::clone() const {
  auto c = std::make_unique<ConvBN>(*this);
  c->trace_ = nullptr;
  return c;
}

void ConvBN::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&conv_.weights);
  out.push_back(&bn_.gamma);
  out.push_back(&bn_.beta);
}

void ConvBN::collect_buffers(std::vector<Tensor*>& out) {
  out.push_back(&bn_.running_mean);
  out.push_back(&bn_.running_var);
}

void ConvBN::collect_units(std::vector<ConvBN*>& out) { out.push_back(this); }

Tensor ReLU::forward(const Tensor& x, bool training) {
  if (training) input_ = x;
  return relu_forward(x);
}

Tensor ReLU::backward(const Tensor& grad_out) { return relu_backward(input_, grad_out); }

Tensor GlobalAvgPool::forward(const Tensor& x, bool /*training*/) {
  input_shape_ = x.shape();
  return global_avg_pool_forward(x);
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  return global_avg_pool_backward(input_shape_, grad_out);
}

Tensor Flatten::forward(const Tensor& x, bool /*training*/) {
  input_shape_ = x.shape();
  return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

Tensor Flatten::backward(const Tensor& grad_out) { return grad_out.reshaped(input_shape_); }

Linear::Linear(std::string name, std::size_t in, std::size_t out) {
  params_.weights.name = name + ".weight";
  params_.weights.value = Tensor({out, in});
  params_.weights.value.enable_grad();
  params_.bias.name = name + ".bias";
  params_.bias.value = Tensor({out});
  params_.bias.value.enable_grad();
}

Tensor Linear::forward(const Tensor& x, bool training) {
  if (training) input_ = x;
  return linear_forward(x, params_);
}

Tensor Linear::backward(const Tensor& grad_out) {
  return linear_backward(input_, params_, grad_out);
}

std::unique_ptr<Layer> Linear::clone() const { return std::make_unique<Linear>(*this); }

void Linear::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&params_.weights);
  out.push_back(&params_.bias);
}

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, bool training) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, training);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::unique_ptr<Layer> Sequential::clone() const { return std::make_unique<Sequential>(*this); }

void Sequential::collect_parameters(std::vector<Parameter*>& out) {
  for (auto& l : layers_) l->collect_parameters(out);
}

void Sequential::collect_buffers(std::vector<Tensor*>& out) {
  for (auto& l : layers_) l->collect_buffers(out);
}

void Sequential::collect_units(std::vector<ConvBN*>& out) {
  for (auto& l : layers_) l->collect_units(out);
}

ResidualBlock::ResidualBlock(const std::string& prefix, std::size_t in_channels,
                             std::size_t out_channels, std::size_t stride)
    : conv1_(prefix + ".conv1", in_channels, out_channels, 3, stride, 1, true),
      conv2_(prefix + ".conv2", out_channels, out_channels, 3, 1, 1, true) {
  if (stride != 1 || in_channels != out_channels) {
    shortcut_.emplace(prefix + ".shortcut", in_channels, out_channels, 1, stride, 0, false);
  }
}

ResidualBlock::ResidualBlock(const ResidualBlock& other) = default;

Tensor ResidualBlock::forward(const Tensor& x, bool training) {
  Tensor h = conv1_.forward(x, training);
  Tensor a = relu_forward(h);
  Tensor b = conv2_.forward(a, training);
  Tensor s = shortcut_ ? shortcut_->forward(x, training) : x;
  if (s.shape() != b.shape()) {
    throw ShapeError("residual branch " + shape_str(b.shape()) + " vs shortcut " +
                     shape_str(s.shape()));
  }
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += s[i];
  if (training) {
    hidden_ = h;
    sum_ = b;
  }
  return relu_forward(b);
}

Tensor ResidualBlock::backward(const Tensor& grad_out) {
  Tensor d = relu_backward(sum_, grad_out);
  Tensor da = conv2_.backward(d);
  Tensor dh = relu_backward(hidden_, da);
  Tensor dx = conv1_.backward(dh);
  if (shortcut_) {
    Tensor ds = shortcut_->backward(d);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
  } else {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d[i];
  }
  return dx;
}

std::unique_ptr<Layer> ResidualBlock::clone() const {
  auto c = std::make_unique<ResidualBlock>(*this);
  c->conv1_.set_trace(nullptr);
  c->conv2_.set_trace(nullptr);
  if (c->shortcut_) c->shortcut_->set_trace(nullptr);
  return c;
}

void ResidualBlock::collect_parameters(std::vector<Parameter*>& out) {
  conv1_.collect_parameters(out);
  conv2_.collect_parameters(out);
  if (shortcut_) shortcut_->collect_parameters(out);
}

void ResidualBlock::collect_buffers(std::vector<Tensor*>& out) {
  conv1_.collect_buffers(out);
  conv2_.collect_buffers(out);
  if (shortcut_) shortcut_->collect_buffers(out);
}

void ResidualBlock::collect_units(std::vector<ConvBN*>& out) {
  conv1_.collect_units(out);
  conv2_.collect_units(out);
  if (shortcut_) shortcut_->collect_units(out);
}

}  // namespace psap
