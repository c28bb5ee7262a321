// SPDX-License-Identifier: Apache-2.0
#include "psap/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "psap/errors.hpp"

namespace psap {

LossFn sum_squares_loss() {
  return [](const Tensor& out, Tensor& grad) {
    grad = out;
    double s = 0.0;
    for (double v : out.data()) s += v * v;
    return 0.5 * s;
  };
}

LossFn cross_entropy_loss(std::vector<int> labels) {
  return [labels = std::move(labels)](const Tensor& out, Tensor& grad) {
    LossResult r = softmax_cross_entropy(out, labels);
    grad = std::move(r.grad);
    return r.loss;
  };
}

LossFn projection_loss(Tensor weights) {
  return [weights = std::move(weights)](const Tensor& out, Tensor& grad) {
    if (out.shape() != weights.shape()) throw ShapeError("projection loss shape mismatch");
    grad = weights;
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
    return s;
  };
}

namespace {

double eval_loss(Layer& fragment, const Tensor& input, const LossFn& loss) {
  Tensor g;
  return loss(fragment.forward(input, true), g);
}

void consider(GradCheckResult& r, double analytic, double numeric, double floor,
              const std::string& where) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  const double err = std::abs(analytic - numeric) / denom;
  ++r.checked;
  if (r.worst.empty() || err > r.max_relative_error) {
    r.max_relative_error = err;
    r.worst = where;
  }
}

}  // namespace

GradCheckResult gradient_check(Layer& fragment, const Tensor& input, const LossFn& loss,
                               double step, double floor) {
  std::vector<Parameter*> params;
  fragment.collect_parameters(params);
  for (auto* p : params) {
    if (!p->value.has_grad()) p->value.enable_grad();
    p->value.zero_grad();
  }
  Tensor out = fragment.forward(input, true);
  Tensor upstream;
  loss(out, upstream);
  Tensor dinput = fragment.backward(upstream);

  GradCheckResult r;
  for (auto* p : params) {
    auto vals = p->value.data();
    const auto grad = p->value.grad();
    std::vector<double> analytic(grad.begin(), grad.end());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + step;
      const double up = eval_loss(fragment, input, loss);
      vals[i] = orig - step;
      const double down = eval_loss(fragment, input, loss);
      vals[i] = orig;
      consider(r, analytic[i], (up - down) / (2.0 * step), floor,
               p->name + "[" + std::to_string(i) + "]");
    }
  }
  Tensor x = input;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = eval_loss(fragment, x, loss);
    x[i] = orig - step;
    const double down = eval_loss(fragment, x, loss);
    x[i] = orig;
    consider(r, dinput[i], (up - down) / (2.0 * step), floor, "input[" + std::to_string(i) + "]");
  }
  return r;
}

}  // namespace psap
