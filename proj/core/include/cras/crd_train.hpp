#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "cras/centers.hpp"
#include "cras/dafs.hpp"
#include "cras/matrix.hpp"
#include "cras/nn_model.hpp"
#include "cras/tensor.hpp"

namespace cras {

// What the discriminator sees: u, u - p, or [u | u - p].
enum class FeatureMode { kRaw, kResidual, kRawResidual };

std::string_view to_string(FeatureMode mode);
FeatureMode parse_feature_mode(std::string_view text);

constexpr std::size_t discriminator_input_dim(FeatureMode mode, std::size_t channels) {
  return mode == FeatureMode::kRawResidual ? 2 * channels : channels;
}

template <typename T>
Tensor3<T> concat_center_aware(const Tensor3<T>& x, const Tensor3<T>& p, FeatureMode mode) {
  require_same_shape(x, p, "concat_center_aware");
  if (mode == FeatureMode::kRaw) return x;
  const std::size_t n = x.size();
  if (mode == FeatureMode::kResidual) {
    Tensor3<T> out(x.channels(), x.height(), x.width());
    for (std::size_t i = 0; i < n; ++i) out.storage()[i] = x.storage()[i] - p.storage()[i];
    return out;
  }
  Tensor3<T> out(2 * x.channels(), x.height(), x.width());
  auto& dst = out.storage();
  for (std::size_t i = 0; i < n; ++i) {
    dst[i] = x.storage()[i];
    dst[n + i] = x.storage()[i] - p.storage()[i];
  }
  return out;
}

// Normal branch y and anomalous branch z of one sample.
struct CenterAwarePair {
  FeatureMap y;
  FeatureMap z;
};

// (1 / 2NHW) * sum over samples and positions of bce(D(y), 0) + bce(D(z), 1).
double batch_loss(std::span<const CenterAwarePair> pairs, const DiscriminatorNet<float>& disc);

template <typename T>
struct SampleGradients {
  DenseGradients<T> adapter;
  DiscriminatorGradients<T> discriminator;
  std::common_type_t<T, double> loss_sum = 0;  // unscaled sum of the 2*H*W bce terms
  bool degenerate = false;  // every residual was zero, alpha fell back to 1
};

// One sample's contribution to the training objective. p (recomposed center) and
// g (noise) are constants; gradients flow from both branches into the adapter,
// including through alpha's dependence on r = ||u - p||. Every bce term is
// weighted by `loss_scale` in the returned gradients.
template <typename T>
SampleGradients<T> sample_gradients(const Tensor3<T>& t, const Tensor3<T>& p, const Tensor3<T>& g,
                                    const AdapterNet<T>& adapter,
                                    const DiscriminatorNet<T>& disc, FeatureMode mode,
                                    double beta, double loss_scale, bool swap_targets = false) {
  const std::size_t C = adapter.channels();
  const std::size_t H = t.height();
  const std::size_t W = t.width();
  const std::size_t P = H * W;
  require(t.channels() == C, ErrorCode::kDimMismatch, "sample_gradients: t channels");
  require(p.channels() == C && p.height() == H && p.width() == W, ErrorCode::kDimMismatch,
          "sample_gradients: p is " + shape_string(p) + ", expected " + shape_string(C, H, W));
  require_same_shape(g, p, "sample_gradients: g");
  require(disc.in_dim() == discriminator_input_dim(mode, C), ErrorCode::kDimMismatch,
          "discriminator input width does not match feature mode");

  const Matrix<T> t_rows = to_positions(t);
  const Tensor3<T> u = from_positions(adapter.forward(t_rows), H, W);

  const NormMap<T> r = residual_norm_map(u, p);
  const NormMap<T> g_norm = position_norms(g);
  const DistanceRatio<T> ratio = distance_ratio_map(g_norm, r, beta);
  const Tensor3<T> v = synthesize(u, ratio.alpha, g);

  const Matrix<T> y_rows = to_positions(concat_center_aware(u, p, mode));
  const Matrix<T> z_rows = to_positions(concat_center_aware(v, p, mode));
  const std::size_t D = y_rows.cols;
  Matrix<T> stacked(2 * P, D);
  std::copy(y_rows.values.begin(), y_rows.values.end(), stacked.values.begin());
  std::copy(z_rows.values.begin(), z_rows.values.end(), stacked.values.begin() + P * D);

  typename DiscriminatorNet<T>::Cache cache;
  const std::vector<T> logits = disc.forward(stacked, &cache);

  SampleGradients<T> out{DenseGradients<T>(adapter.layer), disc.zero_gradients(), 0.0,
                         ratio.degenerate};
  const int normal_target = swap_targets ? 1 : 0;
  const int anomalous_target = swap_targets ? 0 : 1;
  std::vector<T> logit_grads(2 * P);
  for (std::size_t i = 0; i < 2 * P; ++i) {
    const int target = i < P ? normal_target : anomalous_target;
    out.loss_sum += bce_with_logits(logits[i], target);
    logit_grads[i] = T(loss_scale) * bce_grad(logits[i], target);
  }
  const Matrix<T> d_in = disc.backward(cache, logit_grads, out.discriminator);

  // Split input gradients back into u and v; the residual half maps to x - p with p constant.
  Tensor3<T> grad_u(C, H, W);
  Tensor3<T> grad_v(C, H, W);
  for (std::size_t q = 0; q < P; ++q) {
    for (std::size_t c = 0; c < C; ++c) {
      T du = T{};
      T dv = T{};
      switch (mode) {
        case FeatureMode::kRaw:
        case FeatureMode::kResidual:
          du = d_in(q, c);
          dv = d_in(P + q, c);
          break;
        case FeatureMode::kRawResidual:
          du = d_in(q, c) + d_in(q, C + c);
          dv = d_in(P + q, c) + d_in(P + q, C + c);
          break;
      }
      grad_u.storage()[c * P + q] = du;
      grad_v.storage()[c * P + q] = dv;
    }
  }
  synthesize_backward(u, p, g, g_norm, r, ratio, beta, grad_v, grad_u);
  dense_backward(adapter.layer, t_rows, to_positions(grad_u), out.adapter);
  return out;
}

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double lr_adapter = 1e-4;
  double lr_discriminator = 2e-4;
  double weight_decay = 1e-5;
  NoiseConfig noise;
  RefreshPolicy refresh_policy = RefreshPolicy::kPerEpoch;
  CenterMode center_mode = CenterMode::kMean;
  FeatureMode feature_mode = FeatureMode::kRawResidual;
  std::uint64_t seed = 0;
  std::size_t workers = 1;    // per-sample gradient workers; 1 = deterministic single worker
  bool swap_targets = false;  // sanity knob: label y anomalous and z normal

  void validate() const;
};

struct TrainSample {
  std::string sample_id;
  std::string category;
  FeatureMap features;  // merged t_i
};

struct TrainLogRecord {
  int epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct EpochSummary {
  int epoch = 0;
  double mean_loss = 0.0;
  std::uint64_t noise_seed = 0;
  std::size_t degenerate_samples = 0;
};

struct TrainResult {
  ModelParams params;
  CenterBank centers;
  std::vector<TrainLogRecord> log;
  std::vector<EpochSummary> epochs;
};

using EpochCallback = std::function<void(const EpochSummary&)>;

// Multi-class training over the union of every category's normal samples.
// Deterministic given cfg.seed and cfg.noise.seed.
TrainResult train(std::span<const TrainSample> samples, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Initial, untrained parameters for `channels`-wide features under `config`.
ModelParams initial_params(std::size_t channels, const TrainConfig& config);

// Groups samples by category in lexicographic order.
std::vector<CategorySamples> group_by_category(std::span<const TrainSample> samples);

std::string log_record_json(const TrainLogRecord& record);

}  // namespace cras
