#include "cras/selfcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cras/crd_train.hpp"
#include "cras/random.hpp"
#include "cras/tensor_store.hpp"

namespace cras {
namespace {

struct Case {
  Tensor3<double> t, p, g;
  AdapterNet<double> adapter;
  DiscriminatorNet<double> disc;
  FeatureMode mode = FeatureMode::kRawResidual;
  double beta = 0.3;

  // Extended precision keeps central-difference roundoff far below the tolerance.
  long double loss() const {
    return sample_gradients<long double>(widen(t), widen(p), widen(g), adapter.cast<long double>(),
                                         disc.cast<long double>(), mode, beta, 1.0)
        .loss_sum;
  }

  static Tensor3<long double> widen(const Tensor3<double>& x) {
    Tensor3<long double> out(x.channels(), x.height(), x.width());
    std::copy(x.storage().begin(), x.storage().end(), out.storage().begin());
    return out;
  }
};

Case make_case(FeatureMode mode, std::uint64_t seed) {
  constexpr std::size_t C = 6, H = 3, W = 3;
  Rng rng(seed);
  Case k;
  k.mode = mode;
  k.t = Tensor3<double>(C, H, W);
  k.p = Tensor3<double>(C, H, W);
  k.g = Tensor3<double>(C, H, W);
  for (auto& v : k.t.storage()) v = rng.uniform(-1, 1);
  for (auto& v : k.p.storage()) v = rng.uniform(-1, 1);
  for (auto& v : k.g.storage()) v = 0.3 * rng.normal();
  k.adapter = AdapterNet<double>::identity_init(C, rng.next_u64(), 0.3);
  for (auto& b : k.adapter.layer.bias) b = rng.uniform(-0.1, 0.1);
  k.disc = DiscriminatorNet<double>::make(discriminator_input_dim(mode, C), C, rng.next_u64());
  for (auto& b : k.disc.hidden.bias) b = rng.uniform(-0.1, 0.1);
  k.disc.out.bias[0] = rng.uniform(-0.1, 0.1);
  return k;
}

double check_case(Case& k) {
  constexpr double kStep = 1e-5;
  const auto analytic =
      sample_gradients<double>(k.t, k.p, k.g, k.adapter, k.disc, k.mode, k.beta, 1.0);
  double worst = 0.0;
  auto sweep = [&](std::vector<double>& values, const std::vector<double>& grads) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + kStep;
      const long double up = k.loss();
      values[i] = saved - kStep;
      const long double down = k.loss();
      values[i] = saved;
      const double numeric = static_cast<double>((up - down) / (2 * kStep));
      const double scale = std::max({std::abs(grads[i]), std::abs(numeric), 1e-9});
      worst = std::max(worst, std::abs(grads[i] - numeric) / scale);
    }
  };
  sweep(k.adapter.layer.weight.values, analytic.adapter.weight.values);
  sweep(k.adapter.layer.bias, analytic.adapter.bias);
  sweep(k.disc.hidden.weight.values, analytic.discriminator.hidden.weight.values);
  sweep(k.disc.hidden.bias, analytic.discriminator.hidden.bias);
  sweep(k.disc.out.weight.values, analytic.discriminator.out.weight.values);
  sweep(k.disc.out.bias, analytic.discriminator.out.bias);
  return worst;
}

}  // namespace

SelfCheckReport run_selfcheck(std::uint64_t seed) {
  SelfCheckReport report;
  for (auto mode : {FeatureMode::kRaw, FeatureMode::kResidual, FeatureMode::kRawResidual}) {
    for (std::uint64_t s = 0; s < 3; ++s) {
      Case k = make_case(mode, splitmix64(seed + 16 * s + static_cast<std::uint64_t>(mode)));
      report.max_gradient_error = std::max(report.max_gradient_error, check_case(k));
      ++report.gradient_cases;
    }
  }
  if (!(report.max_gradient_error <= report.gradient_tolerance)) {
    report.failures.push_back(fmt::format("gradient relative error {:.3e} exceeds {:.0e}",
                                          report.max_gradient_error, report.gradient_tolerance));
  }

  Rng rng(splitmix64(seed ^ 0x5eedULL));
  for (int i = 0; i < 8; ++i) {
    FeatureMap map(1 + rng.next_u64() % 5, 1 + rng.next_u64() % 7, 1 + rng.next_u64() % 7);
    for (auto& v : map.storage()) v = static_cast<float>(rng.normal() * 1e3);
    const std::string bytes = encode_tensor(to_stored(map));
    std::size_t offset = 0;
    const FeatureMap back = as_feature_map(decode_tensor(bytes, offset, true));
    if (back.storage() != map.storage() || back.channels() != map.channels() ||
        back.height() != map.height() || back.width() != map.width()) {
      report.failures.push_back(fmt::format("CRFT roundtrip {} changed the tensor", i));
    }
    ++report.roundtrip_cases;
  }

  TrainConfig config;
  config.seed = seed;
  const ModelParams params = initial_params(8, config);
  if (decode_checkpoint(encode_checkpoint(params)) != params) {
    report.failures.push_back("checkpoint roundtrip changed the parameters");
  }
  ++report.roundtrip_cases;
  return report;
}

}  // namespace cras
