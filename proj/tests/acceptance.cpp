// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Arguments select criteria by number (default: all).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "helpers.hpp"
#include "psap/checkpoint.hpp"
#include "psap/experiments.hpp"
#include "psap/gradcheck.hpp"
#include "psap/kernels.hpp"
#include "psap/policy.hpp"
#include "psap/protect.hpp"
#include "psap/pruning.hpp"

using namespace psap;
using psap::test::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- fragments for the gradient checks ------------------------------------------

class ConvOnly final : public Layer {
 public:
  explicit ConvOnly(ConvParams p) : p_(std::move(p)) {}
  Tensor forward(const Tensor& x, bool) override {
    x_ = x;
    return conv2d_forward(x, p_);
  }
  Tensor backward(const Tensor& g) override { return conv2d_backward(x_, p_, g); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ConvOnly>(*this); }
  void collect_parameters(std::vector<Parameter*>& out) override { out.push_back(&p_.weights); }

 private:
  ConvParams p_;
  Tensor x_;
};

class BNOnly final : public Layer {
 public:
  explicit BNOnly(BNParams p) : p_(std::move(p)) {}
  Tensor forward(const Tensor& x, bool training) override {
    BNCache c;
    Tensor z = batchnorm_forward(x, p_, training, &c);
    cache_ = std::move(c);
    return z;
  }
  Tensor backward(const Tensor& g) override { return batchnorm_backward(g, p_, cache_); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BNOnly>(*this); }
  void collect_parameters(std::vector<Parameter*>& out) override {
    out.push_back(&p_.gamma);
    out.push_back(&p_.beta);
  }

 private:
  BNParams p_;
  BNCache cache_;
};

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void randomize_bn(BNParams& bn, std::mt19937_64& rng) {
  bn.gamma.value = random_tensor(bn.gamma.value.shape(), rng, 0.5, 1.5);
  bn.beta.value = random_tensor(bn.beta.value.shape(), rng, -0.5, 0.5);
  bn.gamma.value.enable_grad();
  bn.beta.value.enable_grad();
}

// --- 1 ------------------------------------------------------------------------

Outcome gradient_correctness() {
  std::mt19937_64 rng(101);
  const char* kinds[] = {"conv", "batchnorm", "linear", "stack", "residual"};
  double worst = 0.0;
  std::string worst_where;
  int cases = 0;
  for (int i = 0; i < 125; ++i, ++cases) {
    const int kind = i % 5;
    std::unique_ptr<Layer> frag;
    Tensor x;
    std::size_t n = pick(rng, 2, 4), c = pick(rng, 1, 3), h = pick(rng, 3, 6);
    if (kind == 0) {
      const std::size_t k = pick(rng, 0, 1) ? 3 : 1;
      auto p = test::make_conv(pick(rng, 1, 4), c, k, pick(rng, 1, 2), k == 3 ? pick(rng, 0, 1) : 0, rng);
      frag = std::make_unique<ConvOnly>(p);
      x = random_tensor({n, c, h, h}, rng);
    } else if (kind == 1) {
      BNParams bn = BNParams::identity(c);
      randomize_bn(bn, rng);
      frag = std::make_unique<BNOnly>(bn);
      x = random_tensor({n, c, h, h}, rng);
    } else if (kind == 2) {
      const std::size_t in = pick(rng, 2, 8);
      auto lin = std::make_unique<Linear>("fc", in, pick(rng, 2, 6));
      lin->params().weights.value = random_tensor(lin->params().weights.value.shape(), rng);
      lin->params().bias.value = random_tensor(lin->params().bias.value.shape(), rng);
      lin->params().weights.value.enable_grad();
      lin->params().bias.value.enable_grad();
      frag = std::move(lin);
      x = random_tensor({n, in}, rng);
    } else if (kind == 3) {
      auto seq = std::make_unique<Sequential>();
      const std::size_t f = pick(rng, 2, 4);
      auto& u = seq->emplace<ConvBN>("u", c, f, 3, pick(rng, 1, 2), 1, true);
      u.conv().weights.value = random_tensor(u.conv().weights.value.shape(), rng);
      u.conv().weights.value.enable_grad();
      randomize_bn(u.bn(), rng);
      seq->emplace<ReLU>();
      seq->emplace<GlobalAvgPool>();
      auto& lin = seq->emplace<Linear>("head", f, 3);
      lin.params().weights.value = random_tensor(lin.params().weights.value.shape(), rng);
      lin.params().weights.value.enable_grad();
      frag = std::move(seq);
      x = random_tensor({n, c, h, h}, rng);
    } else {
      auto seq = std::make_unique<Sequential>();
      const std::size_t out = pick(rng, 0, 1) ? c : c + 1;
      auto& blk = seq->emplace<ResidualBlock>("b", c, out, out == c ? 1 : 2);
      for (ConvBN* u : {&blk.conv1(), &blk.conv2(), blk.shortcut()}) {
        if (!u) continue;
        u->conv().weights.value = random_tensor(u->conv().weights.value.shape(), rng);
        u->conv().weights.value.enable_grad();
        randomize_bn(u->bn(), rng);
      }
      frag = std::move(seq);
      x = random_tensor({n, c, h, h}, rng);
    }
    Tensor probe = frag->clone()->forward(x, true);
    LossFn loss;
    if (kind == 3) {
      std::vector<int> labels(n);
      for (auto& l : labels) l = static_cast<int>(pick(rng, 0, 2));
      loss = cross_entropy_loss(labels);
    } else {
      loss = projection_loss(random_tensor(probe.shape(), rng));
    }
    const auto r = gradient_check(*frag, x, loss);
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_where = std::string(kinds[kind]) + " " + r.worst;
    }
  }
  return {worst <= 1e-4 && cases >= 100,
          fmt("%d randomized fragments, max relative error %.2e (%s)", cases, worst,
              worst_where.c_str())};
}

// --- 2 ------------------------------------------------------------------------

Outcome conv_oracle() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  int cases = 0;
  for (; cases < 60; ++cases) {
    const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 4), h = pick(rng, 3, 9), w = pick(rng, 3, 9);
    const std::size_t k = std::min<std::size_t>({pick(rng, 1, 3), h, w});
    const std::size_t pad = pick(rng, 0, 1), stride = pick(rng, 1, 2);
    ConvParams p = test::make_conv(pick(rng, 1, 6), c, k, stride, pad, rng);
    const Tensor x = random_tensor({n, c, h, w}, rng);
    const Tensor fast = conv2d_forward(x, p);
    const Tensor slow = test::naive_conv(x, p.weights.value, stride, pad);
    if (fast.shape() != slow.shape()) return {false, "shape mismatch against the nested-loop oracle"};
    worst = std::max(worst, test::max_abs_diff(fast.values(), slow.values()));
  }
  return {worst <= 1e-10, fmt("%d cases, max elementwise difference %.2e", cases, worst)};
}

// --- 3 ------------------------------------------------------------------------

Outcome bn_singularity() {
  const double eps = 1e-5;
  const double factor = std::sqrt((1.0 + eps) / eps);
  std::mt19937_64 rng(303);
  std::normal_distribution<double> nd(0.0, 1.0);

  // A unit with filter 0 pruned and filter 1 rescaled to unit output variance.
  ConvBN unit("u", 2, 2, 3, 1, 1, true);
  unit.bn().eps = eps;
  auto& w = unit.conv().weights.value;
  w = random_tensor(w.shape(), rng);
  w.enable_grad();
  const Tensor x = random_tensor({8, 2, 5, 5}, rng);
  const std::size_t len = unit.conv().filter_size();
  std::fill(w.values().begin(), w.values().begin() + static_cast<std::ptrdiff_t>(len), 0.0);
  {
    const Tensor y = conv2d_forward(x, unit.conv());
    double m = 0.0, s = 0.0;
    const std::size_t plane = 25, count = 8 * plane;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t i = 0; i < plane; ++i) m += y[(n * 2 + 1) * plane + i] / count;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = y[(n * 2 + 1) * plane + i] - m;
        s += d * d / count;
      }
    for (std::size_t j = len; j < 2 * len; ++j) w[j] /= std::sqrt(s);
  }
  Tensor up({8, 2, 5, 5});
  for (std::size_t n = 0; n < 8; ++n)
    for (std::size_t i = 0; i < 25; ++i) up[(n * 2 + 0) * 25 + i] = up[(n * 2 + 1) * 25 + i] = nd(rng);

  // BN input gradient per channel, and the conv weight gradient per filter.
  BNCache cache;
  BNParams bn = unit.bn();
  const Tensor y = conv2d_forward(x, unit.conv());
  batchnorm_forward(y, bn, true, &cache);
  const Tensor dy = batchnorm_backward(up, bn, cache);
  double g0 = 0.0, g1 = 0.0;
  for (std::size_t n = 0; n < 8; ++n)
    for (std::size_t i = 0; i < 25; ++i) {
      g0 += dy[(n * 2 + 0) * 25 + i] * dy[(n * 2 + 0) * 25 + i];
      g1 += dy[(n * 2 + 1) * 25 + i] * dy[(n * 2 + 1) * 25 + i];
    }
  const double bn_ratio = std::sqrt(g0 / g1);

  unit.forward(x, true);
  unit.backward(up);
  const auto& gw = unit.conv().weights.value.grad();
  double w0 = 0.0, w1 = 0.0;
  for (std::size_t j = 0; j < len; ++j) {
    w0 += gw[j] * gw[j];
    w1 += gw[len + j] * gw[len + j];
  }
  const double w_ratio = std::sqrt(w0 / w1);
  const double need = 0.5 * factor;
  return {bn_ratio >= need && w_ratio >= need,
          fmt("pruned/reference gradient ratio %.1f at the BN input, %.1f at the conv weights "
              "(need >= %.1f)",
              bn_ratio, w_ratio, need)};
}

// --- 4 ------------------------------------------------------------------------

Outcome policy_grid() {
  // Oracle on integer grid indices: s = i/20, k = j/20.
  struct Row {
    int i, j;
    double delta, s_min, expect;
  };
  std::vector<Row> table;
  for (double s_min : {0.0, 0.1})
    for (double delta : {0.1, 0.2, 0.3})
      for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
          const double s = i / 20.0;
          double e = i <= j ? s + delta : s;
          if (e > 1.0 - s_min) e = 1.0 - s_min;
          if (e < 0.0) e = 0.0;
          table.push_back({i, j, delta, s_min, e});
        }
  int bad = 0, clamped = 0;
  double worst = 0.0;
  for (const auto& r : table) {
    const double got = update_ratio(r.i / 20.0, r.j / 20.0, r.delta, r.s_min);
    const double d = std::abs(got - r.expect);
    worst = std::max(worst, d);
    if (d > 1e-12) ++bad;
    if (r.expect == 1.0 - r.s_min) ++clamped;
  }
  return {bad == 0, fmt("%zu grid points (%d at the upper clamp), %d mismatches, max error %.1e",
                        table.size(), clamped, bad, worst)};
}

// --- 5 ------------------------------------------------------------------------

Outcome mask_semantics() {
  std::mt19937_64 rng(505);
  int layers = 0, violations = 0, nonzero = 0;
  for (int trial = 0; trial < 40; ++trial) {
    ModelSpec s = trial % 2 ? test::small_resnet(static_cast<std::uint64_t>(trial))
                            : test::small_cnn(static_cast<std::uint64_t>(trial));
    s.base_width = pick(rng, 2, 8);
    Model m = build_model(s);
    for (auto* u : m.maskable_units()) {
      const double k = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      apply_mask(*u, make_mask(u->name(), u->out_filters(),
                               select_prune_indices(filter_l2_norms(u->conv()), k)));
      ++layers;
      if (weight_sparsity_ratio(u->conv()) < k - 1.0 / static_cast<double>(u->out_filters())) ++violations;
      const std::size_t c = u->conv().weights.value.dim(1);
      const Tensor y = conv2d_forward(random_tensor({2, c, 6, 6}, rng), u->conv());
      const std::size_t plane = y.dim(2) * y.dim(3);
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t f = 0; f < u->out_filters(); ++f)
          if (!u->mask().kept[f])
            for (std::size_t i = 0; i < plane; ++i)
              if (y[(n * u->out_filters() + f) * plane + i] != 0.0) ++nonzero;
    }
  }
  return {violations == 0 && nonzero == 0,
          fmt("%d layers: %d WSR bound violations, %d non-zero pruned pre-BN outputs", layers,
              violations, nonzero)};
}

// --- 6 ------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> detect_oracle(const Model& m) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto* u : m.maskable_units()) {
    const auto norms = test::flat_filter_norms(u->conv().weights.value);
    const double t = std::accumulate(norms.begin(), norms.end(), 0.0) / static_cast<double>(norms.size());
    std::vector<std::size_t> f;
    for (std::size_t i = 0; i < norms.size(); ++i)
      if (!u->mask().kept[i] && norms[i] > t) f.push_back(i);
    out.push_back(f);
  }
  return out;
}

Outcome listing_fidelity() {
  std::mt19937_64 rng(606);
  int mismatches = 0, restored_bad = 0, flagged_total = 0;
  for (int trial = 0; trial < 30; ++trial) {
    Model m = build_model(test::small_resnet(static_cast<std::uint64_t>(trial)));
    auto backup = backup_weights(m, trial);
    for (auto* u : m.maskable_units()) {
      auto& w = u->conv().weights.value;
      w = random_tensor(w.shape(), rng);
      w.enable_grad();
      for (std::size_t f = 0; f < u->out_filters(); ++f)
        u->mask().kept[f] = std::bernoulli_distribution(0.5)(rng);
    }
    const AbnormalReport rep = detect_abnormal(m);
    if (rep.abnormal != detect_oracle(m)) ++mismatches;
    flagged_total += static_cast<int>(rep.total());
    reconstruct(m, backup, rep, ReconMode::kReload);
    const auto units = m.maskable_units();
    for (std::size_t l = 0; l < units.size(); ++l) {
      const std::size_t len = units[l]->conv().filter_size();
      for (auto f : rep.abnormal[l])
        for (std::size_t j = 0; j < len; ++j)
          if (units[l]->conv().weights.value[f * len + j] != backup.weights[l][f * len + j]) ++restored_bad;
    }
  }
  int toy_hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto toy = test::signal_path_toy(1000 + seed);
    auto* u = toy.model.maskable_units()[0];
    apply_mask(*u, make_mask(u->name(), 4, select_prune_indices(filter_l2_norms(u->conv()), 0.5)));
    SGDState opt;
    probe_step(toy.model, toy.batch, opt);
    const auto rep = detect_abnormal(toy.model);
    if (std::find(rep.abnormal[0].begin(), rep.abnormal[0].end(), 0) != rep.abnormal[0].end()) ++toy_hits;
  }
  return {mismatches == 0 && restored_bad == 0 && toy_hits >= 9,
          fmt("30 random states: %d detector mismatches, %d flagged filters, %d reload differences; "
              "signal filter flagged on %d/10 toy seeds",
              mismatches, flagged_total, restored_bad, toy_hits)};
}

// --- shared desk-scale setup for 7-10 -------------------------------------------

RunConfig desk_config() {
  RunConfig c;
  c.seed = 0;
  c.model.architecture = Architecture::kResnetTiny;
  c.model.blocks = 2;
  c.model.height = c.model.width = 8;
  c.model.classes = 10;
  c.model.base_width = 8;
  c.data.synthetic.size = 1000;
  c.data.synthetic.separability = 0.6;
  c.data.synthetic.noise = 0.3;
  c.data.test_size = 500;
  c.schedule.max_search_epochs = 10;
  c.schedule.max_finetune_epochs = 5;
  c.schedule.batch_size = 50;
  c.schedule.fill_budget = true;
  c.prune.tau = 0.5;
  c.experiments.seeds = 10;
  c.experiments.dense_epochs = 10;
  return c;
}

std::size_t flagged(const RunResult& r) {
  std::size_t n = 0;
  for (const auto& row : r.log.rows())
    for (const auto& l : row.layers) n += l.abnormal;
  return n;
}

// --- 7 ------------------------------------------------------------------------

Outcome ablation_direction() {
  const RunConfig c = desk_config();
  const AblationResult r = run_ablation(c);
  // arms: 0 Pure IPT, 1 w/o PR, 2 w/o SA, 3 PSAP
  const std::size_t S = r.seeds.size();
  auto wins = [&](std::size_t a, std::size_t b) {
    int w = 0;
    for (std::size_t s = 0; s < S; ++s)
      if (r.runs[a][s].test_accuracy >= r.runs[b][s].test_accuracy) ++w;
    return w;
  };
  const double m0 = r.mean_accuracy(0), m1 = r.mean_accuracy(1), m2 = r.mean_accuracy(2),
               m3 = r.mean_accuracy(3);
  const int w31 = wins(3, 1), w10 = wins(1, 0), w32 = wins(3, 2), w20 = wins(2, 0);
  std::size_t flags = 0;
  for (std::size_t s = 0; s < S; ++s) flags += flagged(r.runs[2][s]) + flagged(r.runs[3][s]);
  const bool means = m3 >= m1 && m1 >= m0 && m3 >= m2 && m2 >= m0;
  const int need = 7;
  return {means && w31 >= need && w10 >= need && w32 >= need && w20 >= need,
          fmt("means Pure %.4f, w/o PR %.4f, w/o SA %.4f, PSAP %.4f; seeds holding "
              "PSAP>=w/oPR %d, w/oPR>=Pure %d, PSAP>=w/oSA %d, w/oSA>=Pure %d (need %d/10); "
              "filters flagged by PR %zu",
              m0, m1, m2, m3, w31, w10, w32, w20, need, flags)};
}

// --- 8 ------------------------------------------------------------------------

Outcome uniform_vs_adaptive() {
  RunConfig c = desk_config();
  c.prune.target = TargetMetric::kFlops;
  c.prune.tau = 0.6;
  int wins = 0;
  double ma = 0.0, mu = 0.0, fa = 0.0, fu = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RunConfig a = c;
    a.seed = seed;
    const DataPair d = load_data(a);
    RunConfig u = a;
    u.prune.adaptive = false;
    const RunResult ra = run_experiment(a, d);
    const RunResult ru = run_experiment(u, d);
    if (ra.test_accuracy > ru.test_accuracy) ++wins;
    ma += ra.test_accuracy / 10;
    mu += ru.test_accuracy / 10;
    fa += ra.compression.flops_removed_fraction / 10;
    fu += ru.compression.flops_removed_fraction / 10;
  }
  return {wins >= 8, fmt("adaptive better on %d/10 seeds (need 8); mean accuracy %.4f vs %.4f; "
                         "mean FLOPs removed %.3f vs %.3f",
                         wins, ma, mu, fa, fu)};
}

// --- 9 ------------------------------------------------------------------------

double search_std(const RunResult& r) {
  std::vector<double> acc;
  for (const auto& row : r.log.rows())
    if (row.phase == Phase::kSearch) acc.push_back(row.test_accuracy);
  const double m = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  double v = 0.0;
  for (double a : acc) v += (a - m) * (a - m);
  return std::sqrt(v / static_cast<double>(acc.size()));
}

Outcome reconstruction_stability() {
  RunConfig c = desk_config();
  c.schedule.fill_budget = false;
  c.schedule.max_finetune_epochs = 0;
  int vs_react = 0, vs_reinit = 0;
  std::size_t flags = 0;
  double sd[3] = {0, 0, 0};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RunConfig base = c;
    base.seed = seed;
    const DataPair d = load_data(base);
    double s[3];
    int i = 0;
    for (auto mode : {ReconMode::kReload, ReconMode::kReactivate, ReconMode::kReinitialize}) {
      RunConfig x = base;
      x.prune.recon_mode = mode;
      const RunResult r = run_experiment(x, d);
      s[i] = search_std(r);
      sd[i] += s[i] / 10;
      flags += flagged(r);
      ++i;
    }
    if (s[0] <= s[1]) ++vs_react;
    if (s[0] <= s[2]) ++vs_reinit;
  }
  return {vs_react >= 8 && vs_reinit >= 8,
          fmt("reload <= reactivate on %d/10, reload <= reinit on %d/10 (need 8); mean search-stage "
              "std %.4f / %.4f / %.4f; filters flagged %zu",
              vs_react, vs_reinit, sd[0], sd[1], sd[2], flags)};
}

// --- 10 -----------------------------------------------------------------------

Outcome gradient_accuracy() {
  const RunConfig c = desk_config();
  int grad_wins = 0, drop_wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RunConfig x = c;
    x.seed = seed;
    const DataPair d = load_data(x);
    const Model trained = trained_model(x, d);
    const auto arms = gradient_accuracy_pair(x, trained, d, 0.5);
    if (arms[1].max_grad > arms[0].max_grad) ++grad_wins;
    if (arms[1].accuracy_drop() > arms[0].accuracy_drop()) ++drop_wins;
  }
  return {grad_wins >= 9 && drop_wins >= 9,
          fmt("upper half: larger max gradient on %d/10, larger accuracy drop on %d/10 (need 9)",
              grad_wins, drop_wins)};
}

// --- 11 -----------------------------------------------------------------------

Outcome determinism_persistence() {
  RunConfig c = desk_config();
  c.schedule.max_search_epochs = 4;
  c.schedule.max_finetune_epochs = 2;
  c.data.synthetic.size = 400;
  c.seed = 11;
  const DataPair d = load_data(c);
  auto run_to = [&](int epochs) {
    PsapRunner r(build_model(c.model_spec()), c.prune, c.train_schedule(), d.train, d.test);
    for (int e = 0; e < epochs && !r.done(); ++e) r.step_epoch();
    return r.state();
  };
  const RunState a = run_to(100);
  const RunState b = run_to(100);
  const bool same_run = test::same_log(a.log, b.log) && test::same_state(a.model, b.model);

  const auto dir = test::scratch_dir("acceptance-ckpt");
  save_checkpoint(dir / "mid.bin", to_json(c), run_to(3));
  const Checkpoint ck = load_checkpoint(dir / "mid.bin");
  save_checkpoint(dir / "again.bin", ck.config, ck.state);
  const bool stable = read_file_bytes(dir / "mid.bin") == read_file_bytes(dir / "again.bin");
  PsapRunner resumed(ck.state, c.prune, c.train_schedule(), d.train, d.test);
  resumed.run();
  bool velocities = true;
  for (std::size_t i = 0; i < a.optimizer.velocity.size(); ++i)
    velocities = velocities && resumed.state().optimizer.velocity[i] == a.optimizer.velocity[i];
  const bool resume_ok = test::same_log(resumed.state().log, a.log) &&
                         test::same_state(resumed.state().model, a.model) && velocities;
  return {same_run && stable && resume_ok,
          fmt("repeat run identical: %s; save-load-save byte-identical: %s; resume from epoch 3 "
              "identical to uninterrupted: %s",
              same_run ? "yes" : "no", stable ? "yes" : "no", resume_ok ? "yes" : "no")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "gradient correctness", 120, gradient_correctness},
      {2, "conv oracle equivalence", 60, conv_oracle},
      {3, "BN singularity", 10, bn_singularity},
      {4, "ratio update rule", 1, policy_grid},
      {5, "mask semantics", 30, mask_semantics},
      {6, "detection and reload fidelity", 120, listing_fidelity},
      {7, "ablation direction", 1800, ablation_direction},
      {8, "uniform vs adaptive", 1200, uniform_vs_adaptive},
      {9, "reconstruction-mode stability", 1200, reconstruction_stability},
      {10, "gradient-accuracy relation", 600, gradient_accuracy},
      {11, "determinism and persistence", 300, determinism_persistence},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs < c.budget_s;
    const bool pass = o.pass && in_budget;
    if (!pass) ++failures;
    std::printf("%s criterion %d (%s): %s [%.1f s, budget %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id,
                c.name, o.detail.c_str(), secs, c.budget_s, in_budget ? "" : ", exceeded");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
