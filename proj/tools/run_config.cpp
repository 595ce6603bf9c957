#include "run_config.hpp"

#include <set>

#include <fmt/format.h>

#include "cras/centers.hpp"
#include "cras/error.hpp"
#include "cras/logging.hpp"
#include "cras/tensor_store.hpp"

namespace cras::cli {
namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for,
// so a typo in a sweep config fails instead of silently using a default.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j_.is_object(), ErrorCode::kInvalidArgument, where_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kInvalidArgument, fmt::format("{}.{}: {}", where_, key, e.what()));
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      require(seen_.count(key) > 0, ErrorCode::kInvalidArgument,
              fmt::format("{}: unknown key '{}'", where_, key));
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename Parse>
void get_enum(ObjectReader& r, const char* key, Parse parse) {
  std::string text;
  r.get(key, text);
  if (!text.empty()) parse(text);
}

}  // namespace

void RunConfig::resolve() {
  train.seed = seed;
  train.noise.seed = noise_seed.value_or(seed);
  if (deterministic) train.workers = 1;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  ObjectReader top(j, "config");
  top.get("manifest", c.manifest);
  top.get("out_dir", c.out_dir);
  top.get("model_dir", c.model_dir);
  top.get("smooth_sigma", c.smooth_sigma);
  top.get("write_pgm", c.write_pgm);
  top.get("deterministic", c.deterministic);
  top.get("seed", c.seed);
  top.get("workers", c.train.workers);

  if (const auto* p = top.child("prep")) {
    ObjectReader r(*p, "prep");
    r.get("patch_size", c.prep.patch_size);
    r.get("levels_used", c.prep.levels_used);
    if (r.has("target_channels") && !p->at("target_channels").is_null()) {
      std::size_t target = 0;
      r.get("target_channels", target);
      c.prep.target_channels = target;
    } else {
      r.child("target_channels");
    }
    r.finish();
  }

  if (const auto* t = top.child("train")) {
    ObjectReader r(*t, "train");
    r.get("epochs", c.train.epochs);
    r.get("batch_size", c.train.batch_size);
    r.get("lr_adapter", c.train.lr_adapter);
    r.get("lr_discriminator", c.train.lr_discriminator);
    r.get("weight_decay", c.train.weight_decay);
    get_enum(r, "feature_mode", [&](const std::string& s) { c.train.feature_mode = parse_feature_mode(s); });
    get_enum(r, "center_mode", [&](const std::string& s) { c.train.center_mode = parse_center_mode(s); });
    get_enum(r, "refresh_policy",
             [&](const std::string& s) { c.train.refresh_policy = parse_refresh_policy(s); });
    if (const auto* n = r.child("noise")) {
      ObjectReader nr(*n, "train.noise");
      nr.get("sigma", c.train.noise.sigma);
      nr.get("beta", c.train.noise.beta);
      if (nr.has("seed")) {
        std::uint64_t s = 0;
        nr.get("seed", s);
        c.noise_seed = s;
      } else {
        nr.child("seed");
      }
      nr.finish();
    }
    r.finish();
  }
  top.finish();
  return c;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json prep = {{"patch_size", c.prep.patch_size}, {"levels_used", c.prep.levels_used}};
  prep["target_channels"] =
      c.prep.target_channels ? nlohmann::json(*c.prep.target_channels) : nlohmann::json(nullptr);
  return {
      {"manifest", c.manifest},
      {"out_dir", c.out_dir},
      {"model_dir", c.model_dir},
      {"seed", c.seed},
      {"deterministic", c.deterministic},
      {"workers", c.train.workers},
      {"smooth_sigma", c.smooth_sigma},
      {"write_pgm", c.write_pgm},
      {"prep", prep},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr_adapter", c.train.lr_adapter},
        {"lr_discriminator", c.train.lr_discriminator},
        {"weight_decay", c.train.weight_decay},
        {"feature_mode", std::string(to_string(c.train.feature_mode))},
        {"center_mode", std::string(to_string(c.train.center_mode))},
        {"refresh_policy", std::string(to_string(c.train.refresh_policy))},
        {"noise",
         {{"sigma", c.train.noise.sigma},
          {"beta", c.train.noise.beta},
          {"seed", c.noise_seed.value_or(c.seed)}}}}},
  };
}

RunConfig load_run_config(const RunOverrides& o) {
  RunConfig c;
  if (o.config) {
    const std::filesystem::path path(*o.config);
    require(std::filesystem::is_regular_file(path), ErrorCode::kIo,
            "config file not found: " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::kInvalidArgument, fmt::format("{}: {}", path.string(), e.what()));
    }
    c = run_config_from_json(j);
  }
  if (o.manifest) c.manifest = *o.manifest;
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.model_dir) c.model_dir = *o.model_dir;
  if (o.seed) c.seed = *o.seed;
  if (o.noise_seed) c.noise_seed = *o.noise_seed;
  if (o.deterministic) c.deterministic = true;
  if (o.workers) c.train.workers = *o.workers;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.lr_adapter) c.train.lr_adapter = *o.lr_adapter;
  if (o.lr_discriminator) c.train.lr_discriminator = *o.lr_discriminator;
  if (o.weight_decay) c.train.weight_decay = *o.weight_decay;
  if (o.sigma) c.train.noise.sigma = *o.sigma;
  if (o.beta) c.train.noise.beta = *o.beta;
  if (o.patch_size) c.prep.patch_size = *o.patch_size;
  if (o.levels) c.prep.levels_used = *o.levels;
  if (o.target_channels) c.prep.target_channels = *o.target_channels;
  if (o.feature_mode) c.train.feature_mode = parse_feature_mode(*o.feature_mode);
  if (o.center_mode) c.train.center_mode = parse_center_mode(*o.center_mode);
  if (o.refresh) c.train.refresh_policy = parse_refresh_policy(*o.refresh);
  if (o.smooth_sigma) c.smooth_sigma = *o.smooth_sigma;
  if (o.write_pgm) c.write_pgm = true;
  c.resolve();
  return c;
}

void validate_run_config(const RunConfig& c, const PathRequirements& need) {
  c.prep.validate();
  c.train.validate();
  require(c.smooth_sigma >= 0.0, ErrorCode::kInvalidArgument, "smooth_sigma must be non-negative");
  if (need.out_dir) require(!c.out_dir.empty(), ErrorCode::kInvalidArgument, "--out is required");
  if (need.manifest) {
    require(!c.manifest.empty(), ErrorCode::kInvalidArgument, "--manifest is required");
    require(std::filesystem::is_regular_file(c.manifest), ErrorCode::kIo,
            "manifest not found: " + c.manifest);
  }
  if (need.checkpoint) {
    const auto path = c.model_path() / "checkpoint.crmd";
    require(std::filesystem::is_regular_file(path), ErrorCode::kIo,
            "checkpoint not found: " + path.string());
  }
  if (need.centers) {
    const auto path = c.model_path() / "centers";
    require(std::filesystem::is_directory(path), ErrorCode::kIo,
            "center bank not found: " + path.string());
  }
}

void write_resolved_config(const std::filesystem::path& out_dir, const nlohmann::json& resolved) {
  const std::string text = resolved.dump(2) + "\n";
  log().info("resolved config:\n{}", text);
  std::filesystem::create_directories(out_dir);
  atomic_write_file(out_dir / "resolved_config.json", text);
}

}  // namespace cras::cli
