// SPDX-License-Identifier: Apache-2.0
#include "psap/ops.hpp"

#include <algorithm>
#include <cmath>

#include "psap/errors.hpp"
#include "psap/kernels.hpp"

namespace psap {

BNParams BNParams::identity(std::size_t channels, double eps) {
  BNParams p;
  p.gamma.name = "gamma";
  p.gamma.value = Tensor({channels}, 1.0);
  p.gamma.value.enable_grad();
  p.gamma.decay = true;
  p.beta.name = "beta";
  p.beta.value = Tensor({channels}, 0.0);
  p.beta.value.enable_grad();
  p.running_mean = Tensor({channels}, 0.0);
  p.running_var = Tensor({channels}, 1.0);
  p.eps = eps;
  return p;
}

Tensor conv2d_forward(const Tensor& input, const ConvParams& params) {
  const auto g = kernels::conv_geometry(input.shape(), params.weights.value.shape(), params.stride,
                                        params.padding);
  input.check_finite("conv2d input");
  Tensor out({g.n, g.f, g.oh, g.ow});
  kernels::parallel::conv2d_forward(g, input.data(), params.weights.value.data(), out.data());
  return out;
}

Tensor conv2d_backward(const Tensor& input, ConvParams& params, const Tensor& grad_out) {
  const auto g = kernels::conv_geometry(input.shape(), params.weights.value.shape(), params.stride,
                                        params.padding);
  if (grad_out.shape() != Shape{g.n, g.f, g.oh, g.ow}) {
    throw ShapeError("conv2d grad_out shape " + shape_str(grad_out.shape()) + " mismatch");
  }
  params.weights.value.enable_grad();
  Tensor dinput(input.shape());
  kernels::parallel::conv2d_backward(g, input.data(), params.weights.value.data(), grad_out.data(),
                                     dinput.data(), params.weights.value.grad());
  return dinput;
}

namespace {

struct NchwView {
  std::size_t n, c, spatial;
};

NchwView nchw(const Tensor& t, std::size_t channels, const char* op) {
  if (t.rank() != 4 && t.rank() != 2) {
    throw ShapeError(std::string(op) + " expects NCHW or NC input, got " + shape_str(t.shape()));
  }
  if (t.dim(1) != channels) {
    throw ShapeError(std::string(op) + " channel mismatch: input " + shape_str(t.shape()) +
                     " vs " + std::to_string(channels) + " parameters");
  }
  const std::size_t spatial = t.rank() == 4 ? t.dim(2) * t.dim(3) : 1;
  return {t.dim(0), t.dim(1), spatial};
}

}  // namespace

Tensor batchnorm_forward(const Tensor& y, BNParams& params, bool training, BNCache* cache) {
  const auto v = nchw(y, params.channels(), "batchnorm");
  if (params.eps <= 0.0) throw ContractError("batchnorm eps must be positive");
  Tensor z(y.shape());
  const auto gamma = params.gamma.value.data();
  const auto beta = params.beta.value.data();
  const double m = static_cast<double>(v.n * v.spatial);

  if (!training) {
    const auto rm = params.running_mean.data();
    const auto rv = params.running_var.data();
#pragma omp parallel for schedule(static)
    for (std::size_t c = 0; c < v.c; ++c) {
      const double inv = 1.0 / std::sqrt(rv[c] + params.eps);
      for (std::size_t n = 0; n < v.n; ++n) {
        const std::size_t base = (n * v.c + c) * v.spatial;
        for (std::size_t i = 0; i < v.spatial; ++i) {
          z[base + i] = beta[c] + gamma[c] * (y[base + i] - rm[c]) * inv;
        }
      }
    }
    z.check_finite("batchnorm output");
    return z;
  }

  std::vector<double> mean(v.c), var(v.c);
  Tensor centered(y.shape());
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < v.c; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < v.n; ++n) {
      const std::size_t base = (n * v.c + c) * v.spatial;
      for (std::size_t i = 0; i < v.spatial; ++i) sum += y[base + i];
    }
    const double mu = sum / m;
    double sq = 0.0;
    for (std::size_t n = 0; n < v.n; ++n) {
      const std::size_t base = (n * v.c + c) * v.spatial;
      for (std::size_t i = 0; i < v.spatial; ++i) {
        const double d = y[base + i] - mu;
        centered[base + i] = d;
        sq += d * d;
      }
    }
    const double sigma2 = sq / m;
    mean[c] = mu;
    var[c] = sigma2;
    const double inv = 1.0 / std::sqrt(sigma2 + params.eps);
    for (std::size_t n = 0; n < v.n; ++n) {
      const std::size_t base = (n * v.c + c) * v.spatial;
      for (std::size_t i = 0; i < v.spatial; ++i) {
        z[base + i] = beta[c] + gamma[c] * centered[base + i] * inv;
      }
    }
  }

  auto rm = params.running_mean.data();
  auto rv = params.running_var.data();
  for (std::size_t c = 0; c < v.c; ++c) {
    rm[c] = (1.0 - params.momentum) * rm[c] + params.momentum * mean[c];
    rv[c] = (1.0 - params.momentum) * rv[c] + params.momentum * var[c];
  }
  z.check_finite("batchnorm output");
  if (cache) {
    cache->shape = y.shape();
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->centered = std::move(centered);
  }
  return z;
}

Tensor batchnorm_backward(const Tensor& upstream, BNParams& params,
                          const std::optional<BNCache>& cache) {
  if (!cache) throw ContractError("batchnorm_backward requires a training-mode forward cache");
  if (upstream.shape() != cache->shape) {
    throw ShapeError("batchnorm upstream gradient " + shape_str(upstream.shape()) +
                     " does not match cached forward " + shape_str(cache->shape));
  }
  const auto v = nchw(upstream, params.channels(), "batchnorm");
  params.gamma.value.enable_grad();
  params.beta.value.enable_grad();
  const auto gamma = params.gamma.value.data();
  auto dgamma = params.gamma.value.grad();
  auto dbeta = params.beta.value.grad();
  const double m = static_cast<double>(v.n * v.spatial);
  const Tensor& centered = cache->centered;
  Tensor dy(upstream.shape());

#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < v.c; ++c) {
    const double var_eps = cache->var[c] + params.eps;
    const double inv = 1.0 / std::sqrt(var_eps);
    double sum_dxhat_centered = 0.0, sum_dxhat = 0.0, sum_centered = 0.0;
    double sum_up = 0.0, sum_up_xhat = 0.0;
    for (std::size_t n = 0; n < v.n; ++n) {
      const std::size_t base = (n * v.c + c) * v.spatial;
      for (std::size_t i = 0; i < v.spatial; ++i) {
        const double up = upstream[base + i];
        const double dxhat = up * gamma[c];
        sum_dxhat_centered += dxhat * centered[base + i];
        sum_dxhat += dxhat;
        sum_centered += centered[base + i];
        sum_up += up;
        sum_up_xhat += up * centered[base + i] * inv;
      }
    }
    // dL/dvar and dL/dmu; the second dmu term vanishes analytically but is kept.
    const double dvar = sum_dxhat_centered * -0.5 / (var_eps * std::sqrt(var_eps));
    const double dmu = -inv * sum_dxhat + dvar * (-2.0 / m) * sum_centered;
    for (std::size_t n = 0; n < v.n; ++n) {
      const std::size_t base = (n * v.c + c) * v.spatial;
      for (std::size_t i = 0; i < v.spatial; ++i) {
        const double dxhat = upstream[base + i] * gamma[c];
        dy[base + i] = dxhat * inv + dvar * 2.0 * centered[base + i] / m + dmu / m;
      }
    }
    dgamma[c] += sum_up_xhat;
    dbeta[c] += sum_up;
  }
  return dy;
}

Tensor relu_forward(const Tensor& x) {
  Tensor out(x.shape());
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  if (x.shape() != grad_out.shape()) throw ShapeError("relu gradient shape mismatch");
  Tensor out(x.shape());
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
  return out;
}

Tensor global_avg_pool_forward(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool expects NCHW, got " + shape_str(x.shape()));
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t s = x.dim(2) * x.dim(3);
  Tensor out({x.dim(0), x.dim(1)});
  for (std::size_t i = 0; i < nc; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < s; ++j) sum += x[i * s + j];
    out[i] = sum / static_cast<double>(s);
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out) {
  if (input_shape.size() != 4 || grad_out.shape() != Shape{input_shape[0], input_shape[1]}) {
    throw ShapeError("global_avg_pool gradient shape mismatch");
  }
  Tensor out(input_shape);
  const std::size_t nc = input_shape[0] * input_shape[1];
  const std::size_t s = input_shape[2] * input_shape[3];
  for (std::size_t i = 0; i < nc; ++i) {
    const double g = grad_out[i] / static_cast<double>(s);
    for (std::size_t j = 0; j < s; ++j) out[i * s + j] = g;
  }
  return out;
}

Tensor linear_forward(const Tensor& x, const LinearParams& params) {
  const auto& w = params.weights.value;
  if (x.rank() != 2 || x.dim(1) != w.dim(1)) {
    throw ShapeError("linear input " + shape_str(x.shape()) + " vs weights " +
                     shape_str(w.shape()));
  }
  x.check_finite("linear input");
  const std::size_t n = x.dim(0), in = w.dim(1), out = w.dim(0);
  Tensor y({n, out});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = params.bias.value[o];
      for (std::size_t i = 0; i < in; ++i) acc += x[r * in + i] * w[o * in + i];
      y[r * out + o] = acc;
    }
  return y;
}

Tensor linear_backward(const Tensor& x, LinearParams& params, const Tensor& grad_out) {
  auto& w = params.weights.value;
  const std::size_t n = x.dim(0), in = w.dim(1), out = w.dim(0);
  if (grad_out.shape() != Shape{n, out}) throw ShapeError("linear gradient shape mismatch");
  w.enable_grad();
  params.bias.value.enable_grad();
  auto dw = w.grad();
  auto db = params.bias.value.grad();
  Tensor dx({n, in});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      const double g = grad_out[r * out + o];
      db[o] += g;
      for (std::size_t i = 0; i < in; ++i) {
        dw[o * in + i] += g * x[r * in + i];
        dx[r * in + i] += g * w[o * in + i];
      }
    }
  return dx;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross-entropy logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  LossResult r;
  r.grad = Tensor(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ShapeError("label " + std::to_string(label) + " out of range");
    }
    const double* row = logits.data().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const double log_z = mx + std::log(sum);
    r.loss += log_z - row[label];
    std::size_t best = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(row[j] - log_z);
      r.grad[i * k + j] = (p - (j == static_cast<std::size_t>(label) ? 1.0 : 0.0)) /
                          static_cast<double>(n);
      if (row[j] > row[best]) best = j;
    }
    if (best == static_cast<std::size_t>(label)) ++r.correct;
  }
  r.loss /= static_cast<double>(n);
  if (!std::isfinite(r.loss)) throw NumericalError("non-finite cross-entropy loss");
  return r;
}

}  // namespace psap
