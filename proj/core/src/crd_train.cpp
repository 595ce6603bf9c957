#include "cras/crd_train.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cras/logging.hpp"
#include "cras/parallel.hpp"

namespace cras {

std::string_view to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::kRaw: return "raw";
    case FeatureMode::kResidual: return "residual";
    case FeatureMode::kRawResidual: return "raw+residual";
  }
  return "raw+residual";
}

FeatureMode parse_feature_mode(std::string_view text) {
  if (text == "raw") return FeatureMode::kRaw;
  if (text == "residual") return FeatureMode::kResidual;
  if (text == "raw+residual") return FeatureMode::kRawResidual;
  fail(ErrorCode::kInvalidArgument,
       "feature_mode must be raw|residual|raw+residual, got '" + std::string(text) + "'");
}

double batch_loss(std::span<const CenterAwarePair> pairs, const DiscriminatorNet<float>& disc) {
  require(!pairs.empty(), ErrorCode::kInvalidArgument, "batch_loss: empty batch");
  double sum = 0.0;
  std::size_t terms = 0;
  for (const auto& pair : pairs) {
    require_same_shape(pair.y, pair.z, "batch_loss");
    for (float logit : disc.forward(to_positions(pair.y))) sum += bce_with_logits<double>(logit, 0);
    for (float logit : disc.forward(to_positions(pair.z))) sum += bce_with_logits<double>(logit, 1);
    terms += 2 * pair.y.plane();
  }
  const double loss = sum / static_cast<double>(terms);
  require(std::isfinite(loss), ErrorCode::kDivergence, "batch_loss: non-finite loss");
  return loss;
}

void TrainConfig::validate() const {
  require(epochs > 0, ErrorCode::kInvalidArgument, "epochs must be positive");
  require(batch_size > 0, ErrorCode::kInvalidArgument, "batch_size must be positive");
  require(lr_adapter >= 0.0 && lr_discriminator >= 0.0, ErrorCode::kInvalidArgument,
          "learning rates must be non-negative");
  require(weight_decay >= 0.0, ErrorCode::kInvalidArgument, "weight_decay must be non-negative");
  noise.validate();
}

std::vector<CategorySamples> group_by_category(std::span<const TrainSample> samples) {
  std::map<std::string, CategorySamples> by_category;
  for (const auto& s : samples) {
    auto& cls = by_category[s.category];
    cls.category = s.category;
    cls.features.push_back(s.features);
  }
  std::vector<CategorySamples> out;
  out.reserve(by_category.size());
  for (auto& [name, cls] : by_category) out.push_back(std::move(cls));
  return out;
}

ModelParams initial_params(std::size_t channels, const TrainConfig& config) {
  ModelParams params;
  params.adapter = AdapterNet<float>::identity_init(channels, splitmix64(config.seed ^ 0xada7ULL));
  params.discriminator = DiscriminatorNet<float>::make(
      discriminator_input_dim(config.feature_mode, channels), channels,
      splitmix64(config.seed ^ 0xd15cULL));
  return params;
}

std::string log_record_json(const TrainLogRecord& record) {
  return nlohmann::json{{"epoch", record.epoch},
                        {"step", record.step},
                        {"loss", record.loss},
                        {"grad_norm", record.grad_norm}}
      .dump();
}

namespace {

double squared_norm(const std::vector<std::span<const float>>& groups) {
  double acc = 0.0;
  for (const auto& g : groups) {
    for (float v : g) acc += double(v) * v;
  }
  return acc;
}

}  // namespace

TrainResult train(std::span<const TrainSample> samples, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  require(!samples.empty(), ErrorCode::kInvalidArgument, "training split is empty");
  const FeatureMap& first = samples.front().features;
  for (const auto& s : samples) require_same_shape(s.features, first, "training features");
  const std::size_t C = first.channels();
  const std::size_t H = first.height();
  const std::size_t W = first.width();

  const std::vector<CategorySamples> classes = group_by_category(samples);
  for (const auto& cls : classes) {
    require(!cls.features.empty(), ErrorCode::kInvalidArgument,
            "class '" + cls.category + "' is empty");
  }

  TrainResult result;
  result.params = initial_params(C, config);
  AdapterNet<float>& adapter = result.params.adapter;
  DiscriminatorNet<float>& disc = result.params.discriminator;
  AdamW<float> adapter_opt({config.lr_adapter, config.weight_decay});
  AdamW<float> disc_opt({config.lr_discriminator, config.weight_decay});

  CenterBank bank =
      build_center_bank(classes, adapter, config.center_mode, config.refresh_policy);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(splitmix64(config.seed ^ 0x5eedULL));
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  std::uint64_t step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0 && config.refresh_policy == RefreshPolicy::kPerEpoch) {
      bank = build_center_bank(classes, adapter, config.center_mode, config.refresh_policy);
    }
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }

    double epoch_loss_sum = 0.0;
    std::size_t degenerate = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      const double scale = 1.0 / (2.0 * double(count) * double(H * W));
      std::vector<SampleGradients<float>> per_sample(count);

      parallel_for(count, config.workers, [&](std::size_t b) {
        const TrainSample& s = samples[order[start + b]];
        const FeatureMap u = adapt_features(adapter, s.features);
        const Recomposition rec = recompose(u, bank);
        Rng noise_rng(derive_seed(config.noise.seed, s.sample_id, step));
        const FeatureMap g = sample_noise<float>(C, H, W, config.noise.sigma, noise_rng);
        per_sample[b] = sample_gradients<float>(s.features, rec.alignment.recomposed, g, adapter,
                                                disc, config.feature_mode, config.noise.beta,
                                                scale, config.swap_targets);
      });

      for (const auto& g : per_sample) degenerate += g.degenerate ? 1 : 0;
      SampleGradients<float> total = std::move(per_sample.front());
      for (std::size_t b = 1; b < count; ++b) {
        total.adapter.add(per_sample[b].adapter);
        total.discriminator.add(per_sample[b].discriminator);
        total.loss_sum += per_sample[b].loss_sum;
      }

      const double loss = total.loss_sum * scale;
      const std::vector<std::span<const float>> adapter_grads = {total.adapter.weight.values,
                                                                 total.adapter.bias};
      const std::vector<std::span<const float>> disc_grads = total.discriminator.views();
      const double grad_norm = std::sqrt(squared_norm(adapter_grads) + squared_norm(disc_grads));
      if (!std::isfinite(loss) || !std::isfinite(grad_norm)) {
        fail(ErrorCode::kDivergence, "training diverged at epoch " + std::to_string(epoch) +
                                         " step " + std::to_string(step) + ": loss " +
                                         std::to_string(loss) + ", grad norm " +
                                         std::to_string(grad_norm));
      }
      adapter_opt.step(adapter.parameters(), adapter_grads);
      disc_opt.step(disc.parameters(), disc_grads);

      result.log.push_back({epoch, step, loss, grad_norm});
      epoch_loss_sum += total.loss_sum;
      ++step;
    }

    EpochSummary summary{epoch,
                         epoch_loss_sum / (2.0 * double(samples.size()) * double(H * W)),
                         config.noise.seed, degenerate};
    if (degenerate > 0) {
      log().warn("epoch {}: {} samples coincided with their recomposed center (alpha = 1)", epoch,
                 degenerate);
    }
    log().debug("epoch {} mean loss {:.6f}", epoch, summary.mean_loss);
    result.epochs.push_back(summary);
    if (on_epoch) on_epoch(summary);
  }

  if (config.refresh_policy == RefreshPolicy::kPerEpoch) {
    bank = build_center_bank(classes, adapter, config.center_mode, config.refresh_policy);
  }
  result.centers = std::move(bank);
  return result;
}

}  // namespace cras
