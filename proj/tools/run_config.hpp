#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cras/crd_train.hpp"
#include "cras/feature_prep.hpp"

namespace cras::cli {

// Every experiment knob of one invocation. Loaded from an optional JSON file,
// then overridden by flags; the resolved form is written next to the outputs.
struct RunConfig {
  std::string manifest;
  std::string out_dir;
  std::string model_dir;  // where infer/eval find checkpoint.crmd and centers/; empty = out_dir
  PrepConfig prep;
  TrainConfig train;
  double smooth_sigma = 4.0;
  bool write_pgm = false;
  bool deterministic = false;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> noise_seed;  // defaults to seed

  // Copies seed, worker and determinism settings into the module configs.
  void resolve();
  std::filesystem::path model_path() const { return model_dir.empty() ? out_dir : model_dir; }
};

// Flag values; unset fields leave the config file untouched.
struct RunOverrides {
  std::optional<std::string> config;
  std::optional<std::string> manifest;
  std::optional<std::string> out_dir;
  std::optional<std::string> model_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> noise_seed;
  bool deterministic = false;
  std::optional<std::size_t> workers;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr_adapter;
  std::optional<double> lr_discriminator;
  std::optional<double> weight_decay;
  std::optional<double> sigma;
  std::optional<double> beta;
  std::optional<int> patch_size;
  std::optional<std::vector<int>> levels;
  std::optional<std::size_t> target_channels;
  std::optional<std::string> feature_mode;
  std::optional<std::string> center_mode;
  std::optional<std::string> refresh;
  std::optional<double> smooth_sigma;
  bool write_pgm = false;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const RunOverrides& overrides);

struct PathRequirements {
  bool manifest = false;
  bool out_dir = false;
  bool checkpoint = false;  // model_path()/checkpoint.crmd
  bool centers = false;     // model_path()/centers/
};

// Throws cras::Error naming the first missing path or invalid field.
void validate_run_config(const RunConfig& config, const PathRequirements& need);

// Writes out_dir/resolved_config.json and logs the same document.
void write_resolved_config(const std::filesystem::path& out_dir, const nlohmann::json& resolved);

}  // namespace cras::cli
