// SPDX-License-Identifier: Apache-2.0
#include "psap/kernels.hpp"

#include <algorithm>
#include <vector>

#include "psap/errors.hpp"

namespace psap::kernels {

ConvGeometry conv_geometry(const Shape& input, const Shape& weights, std::size_t stride,
                           std::size_t pad) {
  if (input.size() != 4) throw ShapeError("conv2d input must be NCHW, got " + shape_str(input));
  if (weights.size() != 4) {
    throw ShapeError("conv2d weights must be [F,C,KH,KW], got " + shape_str(weights));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  if (input[1] != weights[1]) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(input) + " vs weights " +
                     shape_str(weights));
  }
  ConvGeometry g;
  g.n = input[0];
  g.c = input[1];
  g.h = input[2];
  g.w = input[3];
  g.f = weights[0];
  g.kh = weights[2];
  g.kw = weights[3];
  g.stride = stride;
  g.pad = pad;
  if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw) {
    throw ShapeError("conv2d kernel " + shape_str(weights) + " larger than padded input " +
                     shape_str(input));
  }
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

namespace {

// col[k][p], k = (c, i, j), p = (oy, ox).
void im2col(const ConvGeometry& g, const double* in, double* col) {
  const std::size_t P = g.oh * g.ow;
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c; ++c) {
    const double* plane = in + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = col + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          double* dst = row + oy * g.ow;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(y) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
            dst[ox] = (x < 0 || x >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0
                                                                       : src[static_cast<std::size_t>(x)];
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* col, double* out) {
  const std::size_t P = g.oh * g.ow;
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  std::fill(out, out + g.c * g.h * g.w, 0.0);
  for (std::size_t c = 0; c < g.c; ++c) {
    double* plane = out + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = col + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = plane + static_cast<std::size_t>(y) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dst[static_cast<std::size_t>(x)] += row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weights, std::span<double> output) {
  const std::size_t K = g.c * g.kh * g.kw;
  const std::size_t P = g.oh * g.ow;
  std::vector<double> col(K * P);
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(g, input.data() + n * g.c * g.h * g.w, col.data());
    double* out_n = output.data() + n * g.f * P;
    const double* colp = col.data();
#pragma omp parallel for schedule(static)
    for (std::size_t f = 0; f < g.f; ++f) {
      double* row = out_n + f * P;
      std::fill(row, row + P, 0.0);
      const double* wf = weights.data() + f * K;
      for (std::size_t k = 0; k < K; ++k) {
        const double wk = wf[k];
        if (wk == 0.0) continue;  // masked filters cost nothing
        const double* src = colp + k * P;
        for (std::size_t p = 0; p < P; ++p) row[p] += wk * src[p];
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weights, std::span<const double> doutput,
                     std::span<double> dinput, std::span<double> dweights) {
  const std::size_t K = g.c * g.kh * g.kw;
  const std::size_t P = g.oh * g.ow;
  std::vector<double> col(K * P);
  std::vector<double> dcol(dinput.empty() ? 0 : K * P);
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(g, input.data() + n * g.c * g.h * g.w, col.data());
    const double* dout_n = doutput.data() + n * g.f * P;
    const double* colp = col.data();
    double* dw = dweights.data();
#pragma omp parallel for schedule(static)
    for (std::size_t f = 0; f < g.f; ++f) {
      const double* drow = dout_n + f * P;
      for (std::size_t k = 0; k < K; ++k) {
        const double* src = colp + k * P;
        double acc = 0.0;
        for (std::size_t p = 0; p < P; ++p) acc += drow[p] * src[p];
        dw[f * K + k] += acc;
      }
    }
    if (dinput.empty()) continue;
    double* dcolp = dcol.data();
#pragma omp parallel for schedule(static)
    for (std::size_t k = 0; k < K; ++k) {
      double* row = dcolp + k * P;
      std::fill(row, row + P, 0.0);
      for (std::size_t f = 0; f < g.f; ++f) {
        const double wk = weights[f * K + k];
        if (wk == 0.0) continue;
        const double* drow = dout_n + f * P;
        for (std::size_t p = 0; p < P; ++p) row[p] += wk * drow[p];
      }
    }
    col2im(g, dcol.data(), dinput.data() + n * g.c * g.h * g.w);
  }
}

}  // namespace parallel

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weights, std::span<double> output) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t f = 0; f < g.f; ++f)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double sum = 0.0;
          for (std::size_t c = 0; c < g.c; ++c)
            for (std::size_t i = 0; i < g.kh; ++i)
              for (std::size_t j = 0; j < g.kw; ++j) {
                const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
                const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
                if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(g.h) ||
                    x >= static_cast<std::ptrdiff_t>(g.w))
                  continue;
                sum += input[((n * g.c + c) * g.h + static_cast<std::size_t>(y)) * g.w +
                             static_cast<std::size_t>(x)] *
                       weights[((f * g.c + c) * g.kh + i) * g.kw + j];
              }
          output[((n * g.f + f) * g.oh + oy) * g.ow + ox] = sum;
        }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weights, std::span<const double> doutput,
                     std::span<double> dinput, std::span<double> dweights) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  if (!dinput.empty()) std::fill(dinput.begin(), dinput.end(), 0.0);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t f = 0; f < g.f; ++f)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const double d = doutput[((n * g.f + f) * g.oh + oy) * g.ow + ox];
          for (std::size_t c = 0; c < g.c; ++c)
            for (std::size_t i = 0; i < g.kh; ++i)
              for (std::size_t j = 0; j < g.kw; ++j) {
                const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
                const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
                if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(g.h) ||
                    x >= static_cast<std::ptrdiff_t>(g.w))
                  continue;
                const std::size_t ii = ((n * g.c + c) * g.h + static_cast<std::size_t>(y)) * g.w +
                                       static_cast<std::size_t>(x);
                const std::size_t wi = ((f * g.c + c) * g.kh + i) * g.kw + j;
                dweights[wi] += d * input[ii];
                if (!dinput.empty()) dinput[ii] += d * weights[wi];
              }
        }
}

}  // namespace reference

}  // namespace psap::kernels
