#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using cras::cli::RunOverrides;

struct LevelsFlag {
  std::vector<int> values;
};

void add_run_options(CLI::App* cmd, RunOverrides& o, LevelsFlag& levels) {
  cmd->add_option("--config", o.config, "JSON run config; flags override its fields");
  cmd->add_option("--manifest", o.manifest, "dataset manifest (JSON lines)");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--model", o.model_dir, "directory holding checkpoint.crmd and centers/ (default: --out)");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--noise-seed", o.noise_seed, "noise seed (default: --seed)");
  cmd->add_flag("--deterministic", o.deterministic, "force a single worker everywhere");
  cmd->add_option("--workers", o.workers, "per-sample workers");
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--batch-size", o.batch_size);
  cmd->add_option("--lr-adapter", o.lr_adapter);
  cmd->add_option("--lr-discriminator", o.lr_discriminator);
  cmd->add_option("--weight-decay", o.weight_decay);
  cmd->add_option("--sigma", o.sigma, "noise std");
  cmd->add_option("--beta", o.beta, "distance-guided rescaling strength");
  cmd->add_option("--patch-size", o.patch_size, "odd neighborhood size");
  cmd->add_option("--levels", levels.values, "hierarchy levels to merge, e.g. 2,3")->delimiter(',');
  cmd->add_option("--target-channels", o.target_channels);
  cmd->add_option("--feature-mode", o.feature_mode, "raw | residual | raw+residual");
  cmd->add_option("--center-mode", o.center_mode, "mean | single-sample");
  cmd->add_option("--refresh", o.refresh, "once | per-epoch");
  cmd->add_option("--smooth-sigma", o.smooth_sigma, "score-map Gaussian sigma in pixels");
  cmd->add_flag("--pgm", o.write_pgm, "also write 8-bit PGM heatmaps");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cras: class-aware multi-class anomaly detection on feature maps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cras 0.1.0");

  RunOverrides run;
  LevelsFlag levels;
  auto* prep = app.add_subcommand("prep", "merge per-level features into one tensor per sample");
  auto* centers = app.add_subcommand("build-centers", "compute class centers from training features");
  auto* train = app.add_subcommand("train", "train the adapter and discriminator");
  auto* infer = app.add_subcommand("infer", "write anomaly score maps for the test split");
  auto* eval = app.add_subcommand("eval", "score the test split and write report.json");
  for (auto* cmd : {prep, centers, train, infer, eval}) add_run_options(cmd, run, levels);

  cras::cli::SynthOverrides synth;
  auto* synth_gen = app.add_subcommand("synth-gen", "generate a synthetic feature dataset");
  synth_gen->add_option("--spec", synth.spec, "JSON spec; flags override its fields");
  synth_gen->add_option("--out", synth.out_dir, "output directory")->required();
  synth_gen->add_option("--seed", synth.seed);
  synth_gen->add_option("--classes", synth.classes);
  synth_gen->add_option("--channels", synth.channels);
  synth_gen->add_option("--height", synth.height);
  synth_gen->add_option("--width", synth.width);
  synth_gen->add_option("--std", synth.within_class_std, "within-class std");
  synth_gen->add_option("--separation", synth.separation, "class separation");
  synth_gen->add_option("--shift", synth.shift, "per-cell anomaly shift norm");
  synth_gen->add_option("--patch", synth.patch, "anomaly patch side in cells");
  synth_gen->add_option("--train-per-class", synth.train_per_class);
  synth_gen->add_option("--test-normal", synth.test_normal);
  synth_gen->add_option("--test-anomalous", synth.test_anomalous);
  synth_gen->add_option("--image-scale", synth.image_scale, "mask pixels per feature cell");
  synth_gen->add_flag("--heteroscedastic", synth.heteroscedastic);
  synth_gen->add_flag("--force", synth.force, "allow a zero anomaly shift");

  cras::cli::AblateOptions ablate_opts;
  auto* ablate = app.add_subcommand("ablate", "train and evaluate ablation variants");
  add_run_options(ablate, run, levels);
  ablate->add_option("--variants", ablate_opts.variants, "JSON variant list");
  ablate->add_option("--spec", ablate_opts.spec, "synthesize data per seed from this spec");
  ablate->add_option("--seeds", ablate_opts.seeds, "seeds, e.g. 1,2,3")->delimiter(',');

  cras::cli::BenchOptions bench;
  auto* bench_hpi = app.add_subcommand("bench-hpi", "time global-to-local vs exhaustive matching");
  bench_hpi->add_option("--classes", bench.classes, "center counts, e.g. 2,4,8,16")
      ->delimiter(',')
      ->capture_default_str();
  bench_hpi->add_option("--channels", bench.channels)->capture_default_str();
  bench_hpi->add_option("--height", bench.height)->capture_default_str();
  bench_hpi->add_option("--width", bench.width)->capture_default_str();
  bench_hpi->add_option("--queries", bench.queries)->capture_default_str();
  bench_hpi->add_option("--repeats", bench.repeats)->capture_default_str();
  bench_hpi->add_option("--seed", bench.seed)->capture_default_str();
  bench_hpi->add_option("--out", bench.out_dir)->capture_default_str();

  cras::cli::SelfCheckOptions check;
  auto* selfcheck = app.add_subcommand("selfcheck", "gradient check and format roundtrips");
  selfcheck->add_option("--seed", check.seed)->capture_default_str();
  selfcheck->add_option("--out", check.out_dir)->capture_default_str();

  if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
    std::cerr << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
    return cras::cli::kExitValidation;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return cras::cli::kExitValidation;
  }

  if (!levels.values.empty()) run.levels = levels.values;

  using namespace cras::cli;
  if (prep->parsed()) return cmd_prep(run);
  if (centers->parsed()) return cmd_build_centers(run);
  if (train->parsed()) return cmd_train(run);
  if (infer->parsed()) return cmd_infer(run);
  if (eval->parsed()) return cmd_eval(run);
  if (synth_gen->parsed()) return cmd_synth_gen(synth);
  if (ablate->parsed()) return cmd_ablate(run, ablate_opts);
  if (bench_hpi->parsed()) return cmd_bench_hpi(bench);
  if (selfcheck->parsed()) return cmd_selfcheck(check);
  std::cerr << app.help();
  return kExitValidation;
}
