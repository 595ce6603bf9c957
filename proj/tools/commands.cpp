#include "commands.hpp"

#include <cstdio>
#include <string_view>

#include <fmt/format.h>

#include "cras/centers.hpp"
#include "cras/dataset.hpp"
#include "cras/error.hpp"
#include "cras/logging.hpp"
#include "cras/selfcheck.hpp"
#include "cras/synth_bench.hpp"
#include "cras/tensor_store.hpp"

namespace cras::cli {
namespace fs = std::filesystem;

namespace {

// Failures before any work starts are validation errors; everything after is
// a runtime failure.
template <typename Validate, typename Run>
int run_phases(std::string_view command, Validate&& validate, Run&& run) {
  try {
    validate();
  } catch (const std::exception& e) {
    log().error("{}: {}", command, e.what());
    return kExitValidation;
  }
  try {
    run();
  } catch (const std::exception& e) {
    log().error("{}: {}", command, e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

std::string file_stem(std::string_view sample_id) {
  std::string out(sample_id);
  for (char& c : out) {
    if (c == '/' || c == '\\') c = '_';
  }
  return out;
}

EvalConfig eval_config(const RunConfig& c, const fs::path& score_dir) {
  EvalConfig e;
  e.feature_mode = c.train.feature_mode;
  e.smooth_sigma = c.smooth_sigma;
  e.workers = c.train.workers;
  e.score_dir = score_dir;
  e.write_pgm = c.write_pgm;
  return e;
}

void check_model(const ModelParams& model, const CenterBank& bank, const DatasetManifest& manifest,
                 FeatureMode mode) {
  const std::size_t C = model.adapter.channels();
  require(model.discriminator.in_dim() == discriminator_input_dim(mode, C), ErrorCode::kDimMismatch,
          fmt::format("checkpoint discriminator takes {} inputs, feature mode {} needs {}",
                      model.discriminator.in_dim(), to_string(mode), discriminator_input_dim(mode, C)));
  require(bank.size() > 0 && bank[0].map().channels() == C, ErrorCode::kDimMismatch,
          "center bank channels do not match the checkpoint adapter");
  for (const auto& category : manifest.categories) {
    if (bank.index_of(category) >= bank.size()) {
      log().warn("category '{}' has no class center; its samples can only match other classes",
                 category);
    }
  }
}

void write_image_scores(const fs::path& path, const EvalReport& report) {
  std::string text;
  for (const auto& s : report.image_scores) {
    text += nlohmann::json{{"sample_id", s.sample_id},
                           {"category", s.category},
                           {"matched_category", s.matched_category},
                           {"label", std::string(to_string(s.label))},
                           {"score", s.score}}
                .dump() +
            "\n";
  }
  atomic_write_file(path, text);
}

struct ScoringInputs {
  RunConfig config;
  DatasetManifest manifest;
  ModelParams model;
  CenterBank bank;
};

// Without an explicit --config, scoring starts from the configuration the model
// was trained with so feature mode and prep settings cannot drift.
void load_scoring_inputs(RunOverrides o, ScoringInputs& in) {
  if (!o.config) {
    const fs::path model_dir(o.model_dir.value_or(o.out_dir.value_or("")));
    const fs::path trained = model_dir / "resolved_config.json";
    if (!model_dir.empty() && fs::is_regular_file(trained)) {
      o.config = trained.string();
      log().info("using the model's configuration {}", trained.string());
    }
  }
  in.config = load_run_config(o);
  validate_run_config(in.config, {.manifest = true, .out_dir = true, .checkpoint = true, .centers = true});
  in.manifest = load_manifest(in.config.manifest);
  in.model = load_checkpoint(in.config.model_path() / "checkpoint.crmd");
  in.bank = load_center_bank(in.config.model_path() / "centers");
  check_model(in.model, in.bank, in.manifest, in.config.train.feature_mode);
}

}  // namespace

int cmd_prep(const RunOverrides& o) {
  RunConfig config;
  DatasetManifest manifest;
  return run_phases(
      "prep",
      [&] {
        config = load_run_config(o);
        validate_run_config(config, {.manifest = true, .out_dir = true});
        manifest = load_manifest(config.manifest);
      },
      [&] {
        const fs::path out(config.out_dir);
        write_resolved_config(out, run_config_to_json(config));
        std::vector<ManifestEntry> entries;
        for (Split split : {Split::kTrain, Split::kTest}) {
          for (const auto& sample : group_samples(manifest, split)) {
            const std::string stem = file_stem(sample.sample_id);
            ManifestEntry entry;
            entry.path = fmt::format("features/{}/{}.crft", to_string(split), stem);
            entry.category = sample.category;
            entry.sample_id = sample.sample_id;
            entry.split = split;
            entry.label = sample.label;
            write_tensor(out / entry.path, load_sample_features(manifest, sample, config.prep));
            if (sample.mask_path) {
              entry.mask_path = fmt::format("masks/{}.crft", stem);
              write_tensor(out / *entry.mask_path, read_mask(manifest.resolve(*sample.mask_path)));
            }
            entries.push_back(std::move(entry));
          }
        }
        write_manifest(out / "manifest.jsonl", entries);
        log().info("prep: merged {} samples into {}", entries.size(), (out / "manifest.jsonl").string());
      });
}

int cmd_build_centers(const RunOverrides& o) {
  RunConfig config;
  DatasetManifest manifest;
  return run_phases(
      "build-centers",
      [&] {
        config = load_run_config(o);
        validate_run_config(config, {.manifest = true, .out_dir = true});
        manifest = load_manifest(config.manifest);
      },
      [&] {
        const fs::path out(config.out_dir);
        write_resolved_config(out, run_config_to_json(config));
        const auto samples = load_train_samples(manifest, config.prep);
        require(!samples.empty(), ErrorCode::kManifest, "manifest has no training samples");
        const fs::path checkpoint = config.model_path() / "checkpoint.crmd";
        ModelParams params;
        if (fs::is_regular_file(checkpoint)) {
          params = load_checkpoint(checkpoint);
          log().info("build-centers: adapter from {}", checkpoint.string());
        } else {
          params = initial_params(samples.front().features.channels(), config.train);
          log().info("build-centers: no checkpoint, using the initial adapter");
        }
        const auto classes = group_by_category(samples);
        const CenterBank bank = build_center_bank(classes, params.adapter, config.train.center_mode,
                                                  config.train.refresh_policy);
        save_center_bank(out / "centers", bank);
        log().info("build-centers: {} centers written to {}", bank.size(), (out / "centers").string());
      });
}

int cmd_train(const RunOverrides& o) {
  RunConfig config;
  DatasetManifest manifest;
  return run_phases(
      "train",
      [&] {
        config = load_run_config(o);
        validate_run_config(config, {.manifest = true, .out_dir = true});
        manifest = load_manifest(config.manifest);
      },
      [&] {
        const fs::path out(config.out_dir);
        write_resolved_config(out, run_config_to_json(config));
        const auto samples = load_train_samples(manifest, config.prep);
        require(!samples.empty(), ErrorCode::kManifest, "manifest has no training samples");
        log().info("train: {} samples, {} categories, C={} {}x{}", samples.size(),
                   manifest.categories.size(), samples.front().features.channels(),
                   samples.front().features.height(), samples.front().features.width());

        nlohmann::json epochs = nlohmann::json::array();
        const TrainResult result = train(samples, config.train, [&](const EpochSummary& e) {
          log().info("epoch {:3d}  loss {:.6f}  noise seed {}  degenerate {}", e.epoch, e.mean_loss,
                     e.noise_seed, e.degenerate_samples);
          epochs.push_back({{"epoch", e.epoch},
                            {"mean_loss", e.mean_loss},
                            {"noise_seed", e.noise_seed},
                            {"degenerate_samples", e.degenerate_samples}});
        });

        save_checkpoint(out / "checkpoint.crmd", result.params);
        save_center_bank(out / "centers", result.centers);
        std::string log_text;
        for (const auto& record : result.log) log_text += log_record_json(record) + "\n";
        atomic_write_file(out / "train_log.jsonl", log_text);
        atomic_write_file(out / "epochs.json", epochs.dump(2) + "\n");
        log().info("train: checkpoint and centers written to {}", out.string());
      });
}

int cmd_infer(const RunOverrides& o) {
  ScoringInputs in;
  return run_phases(
      "infer", [&] { load_scoring_inputs(o, in); },
      [&] {
        const fs::path out(in.config.out_dir);
        write_resolved_config(out, run_config_to_json(in.config));
        const auto samples = load_eval_samples(in.manifest, in.config.prep);
        const EvalReport report =
            evaluate(samples, in.model, in.bank, eval_config(in.config, out / "scores"));
        write_image_scores(out / "scores" / "image_scores.jsonl", report);
        log().info("infer: {} score maps written to {}", report.image_scores.size(),
                   (out / "scores").string());
      });
}

int cmd_eval(const RunOverrides& o) {
  ScoringInputs in;
  return run_phases(
      "eval", [&] { load_scoring_inputs(o, in); },
      [&] {
        const fs::path out(in.config.out_dir);
        write_resolved_config(out, run_config_to_json(in.config));
        const auto samples = load_eval_samples(in.manifest, in.config.prep);
        const EvalReport report =
            evaluate(samples, in.model, in.bank, eval_config(in.config, out / "scores"));
        write_image_scores(out / "scores" / "image_scores.jsonl", report);
        const std::string table = report_table(report);
        atomic_write_file(out / "report.json", report_to_json(report).dump(2) + "\n");
        atomic_write_file(out / "report.txt", table);
        std::fputs(table.c_str(), stdout);
      });
}

int cmd_synth_gen(const SynthOverrides& o) {
  SynthSpec spec;
  return run_phases(
      "synth-gen",
      [&] {
        if (o.spec) {
          require(fs::is_regular_file(*o.spec), ErrorCode::kIo, "spec file not found: " + *o.spec);
          try {
            spec = synth_spec_from_json(nlohmann::json::parse(read_file(*o.spec)));
          } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::kInvalidArgument, fmt::format("{}: {}", *o.spec, e.what()));
          }
        }
        require(o.out_dir.has_value(), ErrorCode::kInvalidArgument, "--out is required");
        if (o.seed) spec.seed = *o.seed;
        if (o.classes) spec.n_classes = *o.classes;
        if (o.channels) spec.channels = *o.channels;
        if (o.height) spec.height = *o.height;
        if (o.width) spec.width = *o.width;
        if (o.within_class_std) spec.within_class_std = *o.within_class_std;
        if (o.separation) spec.class_separation = *o.separation;
        if (o.shift) spec.anomaly_shift = *o.shift;
        if (o.patch) spec.anomaly_patch = *o.patch;
        if (o.train_per_class) spec.train_per_class = *o.train_per_class;
        if (o.test_normal) spec.test_normal_per_class = *o.test_normal;
        if (o.test_anomalous) spec.test_anomalous_per_class = *o.test_anomalous;
        if (o.image_scale) spec.image_scale = *o.image_scale;
        if (o.heteroscedastic) spec.heteroscedastic = true;
        if (o.force) spec.force = true;
        spec.validate();
      },
      [&] {
        const fs::path out(*o.out_dir);
        write_resolved_config(out, synth_spec_to_json(spec));
        const fs::path manifest = generate(spec, out);
        std::fputs((manifest.string() + "\n").c_str(), stdout);
      });
}

int cmd_ablate(const RunOverrides& o, const AblateOptions& a) {
  RunConfig config;
  std::vector<AblationVariant> variants;
  std::optional<SynthSpec> spec;
  DatasetManifest manifest;
  std::vector<std::uint64_t> seeds;
  return run_phases(
      "ablate",
      [&] {
        config = load_run_config(o);
        validate_run_config(config, {.manifest = !a.spec, .out_dir = true});
        variants = default_ablation_variants();
        if (a.variants) {
          require(fs::is_regular_file(*a.variants), ErrorCode::kIo,
                  "variants file not found: " + *a.variants);
          variants = ablation_variants_from_json(nlohmann::json::parse(read_file(*a.variants)));
        }
        if (a.spec) {
          require(fs::is_regular_file(*a.spec), ErrorCode::kIo, "spec file not found: " + *a.spec);
          spec = synth_spec_from_json(nlohmann::json::parse(read_file(*a.spec)));
          spec->validate();
        } else {
          manifest = load_manifest(config.manifest);
        }
        seeds = a.seeds.empty() ? std::vector<std::uint64_t>{config.seed} : a.seeds;
      },
      [&] {
        const fs::path out(config.out_dir);
        nlohmann::json resolved = run_config_to_json(config);
        resolved["ablation"] = {{"seeds", seeds}};
        if (spec) resolved["ablation"]["spec"] = synth_spec_to_json(*spec);
        write_resolved_config(out, resolved);

        std::vector<TrainSample> train_set;
        std::vector<EvalSample> test_set;
        if (!spec) {
          train_set = load_train_samples(manifest, config.prep);
          test_set = load_eval_samples(manifest, config.prep);
        }
        nlohmann::json results = nlohmann::json::array();
        std::string text;
        for (std::uint64_t seed : seeds) {
          if (spec) {
            SynthSpec s = *spec;
            s.seed = seed;
            SynthData data = generate_in_memory(s);
            train_set = std::move(data.train);
            test_set = std::move(data.test);
          }
          RunConfig per_seed = config;
          per_seed.seed = seed;
          per_seed.noise_seed.reset();
          per_seed.resolve();
          log().info("ablate: seed {}, {} variants", seed, variants.size());
          EvalConfig eval;
          eval.smooth_sigma = per_seed.smooth_sigma;
          eval.workers = per_seed.train.workers;
          const auto rows = run_ablation(train_set, test_set, variants, per_seed.train, eval);
          results.push_back({{"seed", seed}, {"rows", ablation_to_json(rows)}});
          text += fmt::format("seed {}\n{}\n", seed, ablation_table(rows));
        }
        atomic_write_file(out / "ablation.json", nlohmann::json{{"seeds", results}}.dump(2) + "\n");
        atomic_write_file(out / "ablation.txt", text);
        std::fputs(text.c_str(), stdout);
      });
}

int cmd_bench_hpi(const BenchOptions& o) {
  HpiBenchConfig config;
  return run_phases(
      "bench-hpi",
      [&] {
        config.classes = o.classes;
        config.channels = o.channels;
        config.height = o.height;
        config.width = o.width;
        config.queries = o.queries;
        config.repeats = o.repeats;
        config.seed = o.seed;
        config.validate();
      },
      [&] {
        const fs::path out(o.out_dir);
        write_resolved_config(out, {{"command", "bench-hpi"},
                                    {"classes", config.classes},
                                    {"channels", config.channels},
                                    {"height", config.height},
                                    {"width", config.width},
                                    {"queries", config.queries},
                                    {"repeats", config.repeats},
                                    {"seed", config.seed}});
        const auto rows = bench_hpi(config);
        atomic_write_file(out / "bench_hpi.json", hpi_to_json(rows).dump(2) + "\n");
        std::fputs(hpi_table(rows).c_str(), stdout);
      });
}

int cmd_selfcheck(const SelfCheckOptions& o) {
  SelfCheckReport report;
  const int code = run_phases(
      "selfcheck", [] {},
      [&] {
        write_resolved_config(o.out_dir, {{"command", "selfcheck"}, {"seed", o.seed}});
        report = run_selfcheck(o.seed);
        std::fputs(fmt::format("max gradient relative error: {:.3e} (tolerance {:.0e}, {} cases)\n"
                               "format roundtrip: {} cases\n",
                               report.max_gradient_error, report.gradient_tolerance,
                               report.gradient_cases, report.roundtrip_cases)
                       .c_str(),
                   stdout);
        for (const auto& f : report.failures) log().error("selfcheck: {}", f);
      });
  if (code != kExitOk) return code;
  return report.ok() ? kExitOk : kExitRuntime;
}

}  // namespace cras::cli
