// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures and independent oracles for the unit tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <memory>
#include <string>
#include <vector>

#include "psap/config.hpp"
#include "psap/data.hpp"
#include "psap/models.hpp"
#include "psap/ops.hpp"
#include "psap/tensor.hpp"
#include "psap/trainer.hpp"

namespace psap::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline ConvParams make_conv(std::size_t f, std::size_t c, std::size_t k, std::size_t stride,
                            std::size_t pad, std::mt19937_64& rng) {
  ConvParams p;
  p.weights.name = "w";
  p.weights.value = random_tensor({f, c, k, k}, rng);
  p.weights.value.enable_grad();
  p.stride = stride;
  p.padding = pad;
  return p;
}

/// Direct-definition convolution, written independently of the library.
inline Tensor naive_conv(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t F = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1;
  const std::size_t OW = (W + 2 * pad - KW) / stride + 1;
  Tensor out({N, F, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < KH; ++ky)
              for (std::size_t kx = 0; kx < KW; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W))
                  continue;
                acc += x[((n * C + c) * H + static_cast<std::size_t>(iy)) * W +
                         static_cast<std::size_t>(ix)] *
                       w[((f * C + c) * KH + ky) * KW + kx];
              }
          out[((n * F + f) * OH + oy) * OW + ox] = acc;
        }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::vector<double> flat_filter_norms(const Tensor& w) {
  const std::size_t f = w.dim(0);
  const std::size_t len = w.size() / f;
  std::vector<double> out;
  for (std::size_t i = 0; i < f; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < len; ++j) s += w.values()[i * len + j] * w.values()[i * len + j];
    out.push_back(std::sqrt(s));
  }
  return out;
}

inline SyntheticSpec small_synthetic(std::uint64_t seed, std::size_t size = 200) {
  SyntheticSpec s;
  s.classes = 4;
  s.size = size;
  s.channels = 3;
  s.height = 8;
  s.width = 8;
  s.seed = seed;
  s.separability = 0.8;
  s.noise = 0.2;
  return s;
}

inline ModelSpec small_cnn(std::uint64_t seed, std::size_t classes = 4) {
  ModelSpec m;
  m.architecture = Architecture::kCnnSmall;
  m.height = 8;
  m.width = 8;
  m.classes = classes;
  m.base_width = 4;
  m.seed = seed;
  return m;
}

inline ModelSpec small_resnet(std::uint64_t seed, std::size_t classes = 4) {
  ModelSpec m;
  m.architecture = Architecture::kResnetTiny;
  m.blocks = 1;
  m.height = 8;
  m.width = 8;
  m.classes = classes;
  m.base_width = 4;
  m.seed = seed;
  return m;
}

inline TrainSchedule short_schedule(std::uint64_t seed, int search, int finetune) {
  TrainSchedule s;
  s.max_search_epochs = search;
  s.max_finetune_epochs = finetune;
  s.batch_size = 50;
  s.seed = seed;
  return s;
}

/// A full run configuration small enough to finish in about a second.
inline RunConfig tiny_run_config(std::uint64_t seed = 0) {
  RunConfig c;
  c.seed = seed;
  c.model = small_cnn(0);
  c.data.synthetic = small_synthetic(0, 100);
  c.data.test_size = 40;
  c.schedule = short_schedule(0, 2, 1);
  c.prune.tau = 0.3;
  c.experiments.seeds = 2;
  c.experiments.dense_epochs = 2;
  c.experiments.sensitivity_finetune_epochs = 1;
  c.experiments.ratios = {0.0, 0.5};
  return c;
}

/// Bitwise comparison of every parameter and buffer.
inline bool same_state(const Model& a, const Model& b) {
  if (a.parameters().size() != b.parameters().size()) return false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    if (!(a.parameters()[i]->value == b.parameters()[i]->value)) return false;
  for (std::size_t i = 0; i < a.buffers().size(); ++i)
    if (!(*a.buffers()[i] == *b.buffers()[i])) return false;
  for (std::size_t i = 0; i < a.units().size(); ++i)
    if (a.units()[i]->mask().kept != b.units()[i]->mask().kept) return false;
  return true;
}

/// Log rows equal in everything but wall time.
inline bool same_log(const ExperimentLog& a, const ExperimentLog& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.rows()[i];
    const auto& y = b.rows()[i];
    if (x.epoch != y.epoch || x.phase != y.phase || x.learning_rate != y.learning_rate ||
        x.train_loss != y.train_loss || x.train_accuracy != y.train_accuracy ||
        x.test_loss != y.test_loss || x.test_accuracy != y.test_accuracy ||
        x.param_ratio_removed != y.param_ratio_removed ||
        x.flops_removed_fraction != y.flops_removed_fraction || x.max_grad != y.max_grad ||
        x.layers.size() != y.layers.size())
      return false;
    for (std::size_t l = 0; l < x.layers.size(); ++l) {
      if (x.layers[l].layer != y.layers[l].layer || x.layers[l].wsr != y.layers[l].wsr ||
          x.layers[l].k != y.layers[l].k || x.layers[l].abnormal != y.layers[l].abnormal)
        return false;
    }
  }
  return true;
}

/// Four-filter conv unit followed by pooling and a two-class head that reads
/// only filter 0. Labels are the sign of filter 0's centred response, so the
/// filter carries all of the signal, yet its weights are scaled down so that
/// norm-based selection prunes it together with the weakest dead filter.
/// Images carry a large per-image offset that the zero-sum signal filter
/// ignores but a filter regrown from zero in one step does not.
struct SignalToy {
  Model model;
  Batch batch;
};

inline SignalToy signal_path_toy(std::uint64_t seed, std::size_t batch = 32) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto body = std::make_unique<Sequential>();
  auto& unit = body->emplace<ConvBN>("toy", 1, 4, 3, 1, 0, true);
  body->emplace<GlobalAvgPool>();
  auto& head = body->emplace<Linear>("head", 4, 2);
  auto& w = unit.conv().weights.value;
  const double scale[4] = {0.01, 0.06, 0.1, 0.1};
  for (std::size_t f = 0; f < 4; ++f) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 9; ++j) mean += (w[f * 9 + j] = scale[f] * nd(rng)) / 9.0;
    if (f == 0)
      for (std::size_t j = 0; j < 9; ++j) w[j] -= mean;
  }
  head.params().weights.value[0] = -3.0;  // row 0, column 0
  head.params().weights.value[4] = 3.0;   // row 1, column 0

  Batch b;
  b.images = Tensor({batch, 1, 6, 6});
  for (std::size_t n = 0; n < batch; ++n) {
    const double offset = 3.0 * nd(rng);
    for (std::size_t i = 0; i < 36; ++i) b.images[n * 36 + i] = offset + nd(rng);
  }
  ConvParams probe = unit.conv();
  Tensor y = conv2d_forward(b.images, probe);
  std::vector<double> score(batch, 0.0);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < 16; ++i) score[n] += y[(n * 4 + 0) * 16 + i];
  std::vector<double> sorted = score;
  std::nth_element(sorted.begin(), sorted.begin() + batch / 2, sorted.end());
  const double median = sorted[batch / 2];
  for (std::size_t n = 0; n < batch; ++n) b.labels.push_back(score[n] >= median ? 1 : 0);

  Model m(ModelSpec{}, std::move(body));
  m.forward(Tensor({1, 1, 6, 6}), false);
  return {std::move(m), std::move(b)};
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("psap-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace psap::test
