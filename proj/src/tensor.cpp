// SPDX-License-Identifier: Apache-2.0
#include "psap/tensor.hpp"

#include <cmath>
#include <sstream>

#include "psap/errors.hpp"

namespace psap {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimension must be positive: " + shape_str(shape_));
  }
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimension must be positive: " + shape_str(shape_));
  }
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

void Tensor::enable_grad() {
  if (!grad_) grad_.emplace(data_.size(), 0.0);
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

std::span<double> Tensor::grad() {
  if (!grad_) throw ContractError("tensor has no gradient buffer");
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw ContractError("tensor has no gradient buffer");
  return *grad_;
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

void Tensor::reshape(Shape shape) {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
}

void check_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << "non-finite value " << values[i] << " in " << what << " at flat index " << i;
      throw NumericalError(os.str());
    }
  }
}

void Tensor::check_finite(std::string_view what) const { psap::check_finite(data_, what); }

void Tensor::check_grad_finite(std::string_view what) const {
  if (grad_) psap::check_finite(*grad_, what);
}

}  // namespace psap
