#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cras/error.hpp"
#include "cras/matrix.hpp"
#include "cras/random.hpp"

namespace cras {

template <typename T>
struct DenseLayer {
  Matrix<T> weight;  // out_dim x in_dim
  std::vector<T> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim)
      : weight(out_dim, in_dim), bias(out_dim, T{}) {}

  std::size_t in_dim() const noexcept { return weight.cols; }
  std::size_t out_dim() const noexcept { return weight.rows; }

  template <typename U>
  DenseLayer<U> cast() const {
    DenseLayer<U> out(in_dim(), out_dim());
    for (std::size_t i = 0; i < weight.values.size(); ++i) out.weight.values[i] = U(weight.values[i]);
    for (std::size_t i = 0; i < bias.size(); ++i) out.bias[i] = U(bias[i]);
    return out;
  }

  bool operator==(const DenseLayer&) const = default;
};

template <typename T>
struct DenseGradients {
  Matrix<T> weight;
  std::vector<T> bias;

  DenseGradients() = default;
  explicit DenseGradients(const DenseLayer<T>& layer)
      : weight(layer.out_dim(), layer.in_dim()), bias(layer.out_dim(), T{}) {}

  void add(const DenseGradients& other) {
    for (std::size_t i = 0; i < weight.values.size(); ++i) weight.values[i] += other.weight.values[i];
    for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += other.bias[i];
  }
  void scale(T factor) {
    for (auto& v : weight.values) v *= factor;
    for (auto& v : bias) v *= factor;
  }
};

template <typename T>
Matrix<T> dense_forward(const DenseLayer<T>& layer, const Matrix<T>& input) {
  require(input.cols == layer.in_dim(), ErrorCode::kDimMismatch,
          "dense input dim " + std::to_string(input.cols) + " != layer in_dim " +
              std::to_string(layer.in_dim()));
  const std::size_t in = layer.in_dim();
  const std::size_t out_dim = layer.out_dim();
  Matrix<T> out(input.rows, out_dim);
  for (std::size_t n = 0; n < input.rows; ++n) {
    const T* x = input.values.data() + n * in;
    T* y = out.values.data() + n * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const T* w = layer.weight.values.data() + o * in;
      T acc = layer.bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
  }
  return out;
}

// Accumulates parameter gradients into `grads` and returns d(loss)/d(input).
template <typename T>
Matrix<T> dense_backward(const DenseLayer<T>& layer, const Matrix<T>& input,
                         const Matrix<T>& upstream, DenseGradients<T>& grads) {
  require(upstream.rows == input.rows && upstream.cols == layer.out_dim() &&
              input.cols == layer.in_dim(),
          ErrorCode::kDimMismatch, "dense backward shape mismatch");
  const std::size_t in = layer.in_dim();
  const std::size_t out_dim = layer.out_dim();
  Matrix<T> input_grad(input.rows, in);
  for (std::size_t n = 0; n < input.rows; ++n) {
    const T* x = input.values.data() + n * in;
    const T* up = upstream.values.data() + n * out_dim;
    T* dx = input_grad.values.data() + n * in;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const T g = up[o];
      if (g == T{}) continue;
      grads.bias[o] += g;
      T* dw = grads.weight.values.data() + o * in;
      const T* w = layer.weight.values.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        dw[i] += g * x[i];
        dx[i] += g * w[i];
      }
    }
  }
  return input_grad;
}

inline constexpr double kLeakySlope = 0.2;

template <typename T>
T leaky_relu(T x, T slope = T(kLeakySlope)) {
  return x >= T{} ? x : slope * x;
}

// log(1 + exp(x)) without overflow.
template <typename T>
T softplus(T x) {
  return std::max(x, T{}) + std::log1p(std::exp(-std::abs(x)));
}

// -[t log s(l) + (1-t) log(1-s(l))]; target 1 -> softplus(-l), target 0 -> softplus(l).
template <typename T>
T bce_with_logits(T logit, int target) {
  return target != 0 ? softplus(-logit) : softplus(logit);
}

template <typename T>
T sigmoid(T x) {
  if (x >= T{}) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// d bce / d logit.
template <typename T>
T bce_grad(T logit, int target) {
  return sigmoid(logit) - T(target != 0 ? 1 : 0);
}

// Feature adapter A: a single square dense layer initialized near identity.
template <typename T>
struct AdapterNet {
  DenseLayer<T> layer;

  static AdapterNet identity_init(std::size_t channels, std::uint64_t seed,
                                  double perturbation = 1e-4) {
    AdapterNet net;
    net.layer = DenseLayer<T>(channels, channels);
    Rng rng(seed);
    for (std::size_t o = 0; o < channels; ++o) {
      for (std::size_t i = 0; i < channels; ++i) {
        net.layer.weight(o, i) = T((o == i ? 1.0 : 0.0) + rng.uniform(-perturbation, perturbation));
      }
    }
    return net;
  }

  std::size_t channels() const noexcept { return layer.in_dim(); }
  Matrix<T> forward(const Matrix<T>& input) const { return dense_forward(layer, input); }

  std::vector<std::span<T>> parameters() { return {layer.weight.values, layer.bias}; }
  std::vector<std::span<const T>> parameters() const { return {layer.weight.values, layer.bias}; }

  template <typename U>
  AdapterNet<U> cast() const {
    return AdapterNet<U>{layer.template cast<U>()};
  }
  bool operator==(const AdapterNet&) const = default;
};

template <typename T>
struct DiscriminatorGradients {
  DenseGradients<T> hidden;
  DenseGradients<T> out;

  void add(const DiscriminatorGradients& o) {
    hidden.add(o.hidden);
    out.add(o.out);
  }
  void scale(T f) {
    hidden.scale(f);
    out.scale(f);
  }
  std::vector<std::span<const T>> views() const {
    return {hidden.weight.values, hidden.bias, out.weight.values, out.bias};
  }
};

// Discriminator D: dense(in -> hidden) + leaky ReLU(0.2) + dense(hidden -> 1), emitting logits.
template <typename T>
struct DiscriminatorNet {
  DenseLayer<T> hidden;
  DenseLayer<T> out;

  struct Cache {
    Matrix<T> input;
    Matrix<T> pre_activation;
    Matrix<T> activation;
    bool valid = false;
  };

  // Weights Uniform(+-1/sqrt(fan_in)); biases zero so every hidden unit bends at the origin.
  static DiscriminatorNet make(std::size_t in_dim, std::size_t hidden_dim, std::uint64_t seed) {
    DiscriminatorNet net;
    net.hidden = DenseLayer<T>(in_dim, hidden_dim);
    net.out = DenseLayer<T>(hidden_dim, 1);
    Rng rng(seed);
    auto fill = [&](DenseLayer<T>& layer) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_dim()));
      for (auto& w : layer.weight.values) w = T(rng.uniform(-bound, bound));
      std::fill(layer.bias.begin(), layer.bias.end(), T{});
    };
    fill(net.hidden);
    fill(net.out);
    return net;
  }

  std::size_t in_dim() const noexcept { return hidden.in_dim(); }
  std::size_t hidden_dim() const noexcept { return hidden.out_dim(); }

  // Returns one logit per input row.
  std::vector<T> forward(const Matrix<T>& input, Cache* cache = nullptr) const {
    Matrix<T> pre = dense_forward(hidden, input);
    Matrix<T> act = pre;
    for (auto& v : act.values) v = leaky_relu(v);
    Matrix<T> logits = dense_forward(out, act);
    if (cache) {
      cache->input = input;
      cache->pre_activation = std::move(pre);
      cache->activation = std::move(act);
      cache->valid = true;
    }
    return std::move(logits.values);
  }

  DiscriminatorGradients<T> zero_gradients() const {
    return {DenseGradients<T>(hidden), DenseGradients<T>(out)};
  }

  // Accumulates into `grads`, returns d(loss)/d(input).
  Matrix<T> backward(const Cache& cache, std::span<const T> logit_grads,
                     DiscriminatorGradients<T>& grads) const {
    require(cache.valid, ErrorCode::kMissingCache, "discriminator backward without forward cache");
    require(logit_grads.size() == cache.input.rows, ErrorCode::kDimMismatch,
            "logit gradient count mismatch");
    Matrix<T> upstream(logit_grads.size(), 1);
    std::copy(logit_grads.begin(), logit_grads.end(), upstream.values.begin());
    Matrix<T> act_grad = dense_backward(out, cache.activation, upstream, grads.out);
    for (std::size_t i = 0; i < act_grad.values.size(); ++i) {
      if (cache.pre_activation.values[i] < T{}) act_grad.values[i] *= T(kLeakySlope);
    }
    return dense_backward(hidden, cache.input, act_grad, grads.hidden);
  }

  std::vector<std::span<T>> parameters() {
    return {hidden.weight.values, hidden.bias, out.weight.values, out.bias};
  }
  std::vector<std::span<const T>> parameters() const {
    return {hidden.weight.values, hidden.bias, out.weight.values, out.bias};
  }

  template <typename U>
  DiscriminatorNet<U> cast() const {
    return DiscriminatorNet<U>{hidden.template cast<U>(), out.template cast<U>()};
  }
  bool operator==(const DiscriminatorNet&) const = default;
};

// u = A(t): the adapter applied independently at every spatial position.
template <typename T>
Tensor3<T> adapt_features(const AdapterNet<T>& adapter, const Tensor3<T>& features) {
  require(features.channels() == adapter.channels(), ErrorCode::kDimMismatch,
          "adapter expects " + std::to_string(adapter.channels()) + " channels, got " +
              std::to_string(features.channels()));
  return from_positions(adapter.forward(to_positions(features)), features.height(),
                        features.width());
}

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled weight decay Adam. Moments are held in double regardless of T.
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(AdamWConfig config) : config_(config) {}

  const AdamWConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return step_; }

  void step(const std::vector<std::span<T>>& params,
            const std::vector<std::span<const T>>& grads) {
    require(params.size() == grads.size(), ErrorCode::kDimMismatch,
            "adamw: parameter/gradient group count mismatch");
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.size(), 0.0);
        second_.emplace_back(p.size(), 0.0);
      }
    }
    require(first_.size() == params.size(), ErrorCode::kDimMismatch,
            "adamw: parameter groups changed between steps");
    for (std::size_t g = 0; g < params.size(); ++g) {
      require(params[g].size() == grads[g].size() && params[g].size() == first_[g].size(),
              ErrorCode::kDimMismatch, "adamw: shape mismatch in group " + std::to_string(g));
    }

    ++step_;
    const double t = static_cast<double>(step_);
    const double bias1 = 1.0 - std::pow(config_.beta1, t);
    const double bias2 = 1.0 - std::pow(config_.beta2, t);
    const double decay = 1.0 - config_.lr * config_.weight_decay;
    for (std::size_t g = 0; g < params.size(); ++g) {
      auto& m = first_[g];
      auto& v = second_[g];
      for (std::size_t i = 0; i < params[g].size(); ++i) {
        const double grad = static_cast<double>(grads[g][i]);
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad * grad;
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        double p = static_cast<double>(params[g][i]) * decay;
        p -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        params[g][i] = static_cast<T>(p);
      }
    }
  }

 private:
  AdamWConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::uint64_t step_ = 0;
};

// Trained parameters in deployment precision.
struct ModelParams {
  AdapterNet<float> adapter;
  DiscriminatorNet<float> discriminator;

  bool operator==(const ModelParams&) const = default;
};

// "CRMD" | u16 version | CRFT records: adapter W, adapter b, disc W1, b1, W2, b2.
// Bias vectors are stored as 1 x n CRFT matrices.
inline constexpr char kModelMagic[4] = {'C', 'R', 'M', 'D'};
inline constexpr std::uint16_t kModelVersion = 1;

std::string encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace cras
