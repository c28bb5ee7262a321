// SPDX-License-Identifier: Apache-2.0
#include "psap/step.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "psap/errors.hpp"
#include "psap/pruning.hpp"

namespace psap {

StepResult compute_gradients(Model& model, const Batch& batch) {
  model.zero_grad();
  Tensor logits = model.forward(batch.images, true);
  LossResult lr = softmax_cross_entropy(logits, batch.labels);
  if (!std::isfinite(lr.loss)) throw NumericalError("non-finite training loss");
  model.backward(lr.grad);
  StepResult r;
  r.loss = lr.loss;
  r.correct = lr.correct;
  r.count = batch.labels.size();
  r.stats = gradient_stats(model.parameters());
  return r;
}

StepResult train_step(Model& model, const Batch& batch, SGDState& optimizer,
                      const StepOptions& options) {
  if (options.hard_masks) {
    model.zero_grad();
    Tensor logits = model.forward(batch.images, true);
    LossResult lr = softmax_cross_entropy(logits, batch.labels);
    if (!std::isfinite(lr.loss)) throw NumericalError("non-finite training loss");
    model.backward(lr.grad);
    mask_gradients(model);
    StepResult r{lr.loss, lr.correct, batch.labels.size(), {}};
    r.stats = sgd_step(model.parameters(), optimizer);
    reapply_masks(model, &optimizer);
    return r;
  }
  StepResult r = compute_gradients(model, batch);
  if (options.filter_grad_norms) {
    auto& out = *options.filter_grad_norms;
    out.clear();
    for (const auto* u : model.maskable_units()) {
      const auto& w = u->conv().weights.value;
      const std::size_t len = u->conv().filter_size();
      std::vector<double> norms(u->out_filters(), 0.0);
      if (w.has_grad()) {
        const auto g = w.grad();
        for (std::size_t f = 0; f < norms.size(); ++f) {
          double sq = 0.0;
          for (std::size_t j = 0; j < len; ++j) sq += g[f * len + j] * g[f * len + j];
          norms[f] = std::sqrt(sq);
        }
      }
      out.push_back(std::move(norms));
    }
  }
  sgd_step(model.parameters(), optimizer);
  return r;
}

EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  EvalResult r;
  if (data.size() == 0) return r;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Batch b = make_batch(data, idx);
    Tensor logits = model.forward(b.images, false);
    LossResult lr = softmax_cross_entropy(logits, b.labels);
    loss_sum += lr.loss * static_cast<double>(idx.size());
    correct += lr.correct;
  }
  r.loss = loss_sum / static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

}  // namespace psap
