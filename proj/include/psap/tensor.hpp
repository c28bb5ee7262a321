// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace psap {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer of the
/// same length.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool has_grad() const { return grad_.has_value(); }
  /// Allocates a zeroed gradient buffer if none exists.
  void enable_grad();
  void zero_grad();
  std::span<double> grad();
  std::span<const double> grad() const;

  /// Same shape, new flat layout. Throws ShapeError if the element count differs.
  Tensor reshaped(Shape shape) const;
  void reshape(Shape shape);

  /// Throws NumericalError naming `what` at the first non-finite value.
  void check_finite(std::string_view what) const;
  void check_grad_finite(std::string_view what) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::optional<std::vector<double>> grad_;
};

/// Learnable tensor registered with a model. `index` is its slot in the
/// model's parameter list (and in the optimizer's velocity list).
struct Parameter {
  std::string name;
  Tensor value;
  std::size_t index = 0;
  bool decay = true;
};

void check_finite(std::span<const double> values, std::string_view what);

}  // namespace psap
