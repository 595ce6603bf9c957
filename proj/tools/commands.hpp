#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace cras::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct SynthOverrides {
  std::optional<std::string> spec;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> classes;
  std::optional<std::size_t> channels;
  std::optional<std::size_t> height;
  std::optional<std::size_t> width;
  std::optional<double> within_class_std;
  std::optional<double> separation;
  std::optional<double> shift;
  std::optional<std::size_t> patch;
  std::optional<std::size_t> train_per_class;
  std::optional<std::size_t> test_normal;
  std::optional<std::size_t> test_anomalous;
  std::optional<std::size_t> image_scale;
  bool heteroscedastic = false;
  bool force = false;
};

struct AblateOptions {
  std::optional<std::string> variants;   // JSON file; default variant list otherwise
  std::optional<std::string> spec;       // synthesize data per seed instead of reading a manifest
  std::vector<std::uint64_t> seeds;      // empty = the run config seed
};

struct BenchOptions {
  std::vector<std::size_t> classes = {2, 4, 8, 16};
  std::size_t channels = 16;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t queries = 8;
  int repeats = 5;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

struct SelfCheckOptions {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

int cmd_prep(const RunOverrides& o);
int cmd_build_centers(const RunOverrides& o);
int cmd_train(const RunOverrides& o);
int cmd_infer(const RunOverrides& o);
int cmd_eval(const RunOverrides& o);
int cmd_synth_gen(const SynthOverrides& o);
int cmd_ablate(const RunOverrides& o, const AblateOptions& a);
int cmd_bench_hpi(const BenchOptions& o);
int cmd_selfcheck(const SelfCheckOptions& o);

}  // namespace cras::cli
