// SPDX-License-Identifier: Apache-2.0
//
// psap: command-line front end.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 I/O error, 1 anything else.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "psap/checkpoint.hpp"
#include "psap/config.hpp"
#include "psap/errors.hpp"
#include "psap/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string adaptive;
  std::optional<double> uniform_ratio;
  std::string recon;
  std::string detect;
  std::string threshold_pool;
};

psap::RunConfig resolve(const Overrides& o) {
  psap::RunConfig c = o.config.empty() ? psap::RunConfig{} : psap::load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out_dir = o.out;
  if (!o.adaptive.empty()) c.prune.adaptive = o.adaptive == "on";
  if (o.uniform_ratio) c.prune.uniform_ratio = *o.uniform_ratio;
  if (!o.recon.empty()) c.prune.recon_mode = psap::parse_recon_mode(o.recon);
  if (!o.detect.empty()) c.prune.detect = psap::parse_detect_variant(o.detect);
  if (!o.threshold_pool.empty()) c.prune.threshold_pool = psap::parse_threshold_pool(o.threshold_pool);
  c.validate();
  return c;
}

void print_run(const psap::RunResult& r, const std::string& out) {
  std::printf("test_accuracy %.4f  params_removed %.4f  flops_removed %.4f  search %s after %d epochs\n",
              r.test_accuracy, r.compression.param_ratio_removed,
              r.compression.flops_removed_fraction,
              std::string(psap::search_status_name(r.status)).c_str(), r.search_epochs);
  if (r.status == psap::SearchStatus::kMaxEpochs) {
    std::fprintf(stderr, "psap: warning: target not reached within the search budget\n");
  }
  std::printf("artifacts in %s\n", out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured filter pruning with self-adaptive ratios and protective reconstruction",
               "psap"};
  app.set_version_flag("--version", std::string(psap::kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Run seed (overrides the config)");
  app.add_option("--out", o.out, "Output directory (overrides the config)");
  app.add_option("--adaptive", o.adaptive, "Self-adaptive ratios")
      ->check(CLI::IsMember({"on", "off"}));
  app.add_option("--uniform-ratio", o.uniform_ratio, "Fixed ratio when --adaptive=off")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--recon", o.recon, "Reconstruction mode")
      ->check(CLI::IsMember({"reload", "reactivate", "reinit", "none"}));
  app.add_option("--detect", o.detect, "Detection statistic")
      ->check(CLI::IsMember({"weight-norm", "grad-norm"}));
  app.add_option("--threshold-pool", o.threshold_pool, "Filters averaged for the threshold")
      ->check(CLI::IsMember({"all", "pruned"}));

  auto* run = app.add_subcommand("run", "Search and fine-tune; writes log, checkpoint, summary");
  std::string resume;
  run->add_option("--resume", resume, "Continue from a checkpoint (uses its embedded config)")
      ->check(CLI::ExistingFile);

  auto* ablate = app.add_subcommand("ablate", "2x2 grid of self-adaptive x reconstruction");
  std::optional<int> seeds;
  ablate->add_option("--seeds", seeds, "Number of paired seeds")->check(CLI::PositiveNumber);

  auto* trace = app.add_subcommand("wsr-trace", "Per-epoch WSR of every layer under uniform IPT");

  auto* sens = app.add_subcommand("sensitivity", "Accuracy versus pruning ratio of one layer");
  std::string layer, checkpoint;
  std::vector<double> ratios;
  std::optional<int> brief_epochs;
  sens->add_option("--layer", layer, "Layer to prune");
  sens->add_option("--ratios", ratios, "Ratio grid")->delimiter(',');
  sens->add_option("--finetune-epochs", brief_epochs, "Fine-tune epochs after pruning");
  sens->add_option("--checkpoint", checkpoint, "Trained checkpoint")->check(CLI::ExistingFile);

  auto* grad = app.add_subcommand("gradient-accuracy",
                                  "Max gradient and accuracy drop: lower vs upper half pruned");
  grad->add_option("--checkpoint", checkpoint, "Trained checkpoint")->check(CLI::ExistingFile);
  grad->add_option("--seeds", seeds, "Number of paired seeds")->check(CLI::PositiveNumber);

  auto* inspect = app.add_subcommand("inspect", "Print checkpoint metadata as JSON");
  std::string inspect_path;
  inspect->add_option("checkpoint", inspect_path, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (inspect->parsed()) {
      std::cout << psap::cmd_inspect(inspect_path).dump(2) << "\n";
      return 0;
    }
    if (run->parsed() && !resume.empty()) {
      const std::string out = o.out.empty() ? "." : o.out;
      print_run(psap::resume_run(resume, out), out);
      return 0;
    }
    psap::RunConfig c = resolve(o);
    if (seeds) c.experiments.seeds = *seeds;
    if (!checkpoint.empty()) c.experiments.checkpoint = checkpoint;
    if (!layer.empty()) c.experiments.layer = layer;
    if (!ratios.empty()) c.experiments.ratios = ratios;
    if (brief_epochs) c.experiments.sensitivity_finetune_epochs = *brief_epochs;
    c.validate();
    const psap::fs::path out = c.out_dir;

    if (run->parsed()) {
      print_run(psap::cmd_run(c, out), out.string());
    } else if (ablate->parsed()) {
      const auto r = psap::cmd_ablate(c, out);
      for (std::size_t a = 0; a < r.arms.size(); ++a) {
        std::printf("%-16s mean test accuracy %.4f\n", r.arms[a].type.c_str(), r.mean_accuracy(a));
      }
      std::printf("wrote %s\n", (out / "ablation.csv").string().c_str());
    } else if (trace->parsed()) {
      const auto t = psap::cmd_wsr_trace(c, out);
      std::printf("%zu epochs, wrote %s\n", t.rows.size(), (out / "wsr_trace.csv").string().c_str());
    } else if (sens->parsed()) {
      psap::cmd_sensitivity(c, out);
      std::printf("wrote %s\n", (out / "sensitivity.csv").string().c_str());
    } else if (grad->parsed()) {
      psap::cmd_gradient_accuracy(c, out);
      std::printf("wrote %s\n", (out / "gradient_accuracy.csv").string().c_str());
    }
    return 0;
  } catch (const psap::ConfigError& e) {
    std::fprintf(stderr, "psap: configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const psap::ShapeError& e) {
    std::fprintf(stderr, "psap: configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const psap::NumericalError& e) {
    std::fprintf(stderr, "psap: numerical failure: %s (last good checkpoint kept)\n", e.what());
    return kExitNumerical;
  } catch (const psap::IoError& e) {
    std::fprintf(stderr, "psap: I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "psap: error: %s\n", e.what());
    return 1;
  }
}
