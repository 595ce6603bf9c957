#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "cras/error.hpp"
#include "cras/random.hpp"
#include "cras/tensor.hpp"

namespace cras {

struct NoiseConfig {
  double sigma = 0.015;  // per-element std of g
  double beta = 0.3;     // strength of the distance-guided rescaling
  std::uint64_t seed = 0;

  void validate() const {
    require(sigma > 0.0 && std::isfinite(sigma), ErrorCode::kInvalidArgument,
            "noise sigma must be positive, got " + std::to_string(sigma));
    require(beta >= 0.0 && std::isfinite(beta), ErrorCode::kInvalidArgument,
            "noise beta must be non-negative, got " + std::to_string(beta));
  }
};

template <typename T>
using NormMap = Grid<T>;

// Per-position Euclidean norm over channels.
template <typename T>
NormMap<T> position_norms(const Tensor3<T>& x) {
  NormMap<T> out(x.height(), x.width());
  std::vector<double> acc(x.plane(), 0.0);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto plane = x.channel(c);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += double(plane[i]) * plane[i];
  }
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = T(std::sqrt(acc[i]));
  return out;
}

// r[h,w] = ||u[h,w] - p[h,w]||_2.
template <typename T>
NormMap<T> residual_norm_map(const Tensor3<T>& u, const Tensor3<T>& p) {
  require_same_shape(u, p, "residual_norm_map");
  NormMap<T> out(u.height(), u.width());
  std::vector<double> acc(u.plane(), 0.0);
  for (std::size_t c = 0; c < u.channels(); ++c) {
    auto a = u.channel(c);
    auto b = p.channel(c);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      const double d = double(a[i]) - double(b[i]);
      acc[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = T(std::sqrt(acc[i]));
  return out;
}

// i.i.d. N(0, sigma^2) drawn in (c, h, w) order from `rng`.
template <typename T>
Tensor3<T> sample_noise(std::size_t channels, std::size_t height, std::size_t width,
                        double sigma, Rng& rng) {
  require(sigma > 0.0, ErrorCode::kInvalidArgument, "noise sigma must be positive");
  Tensor3<T> g(channels, height, width);
  for (auto& v : g.storage()) v = T(sigma * rng.normal());
  return g;
}

inline FeatureMap sample_noise(std::size_t channels, std::size_t height, std::size_t width,
                               const NoiseConfig& config) {
  config.validate();
  Rng rng(config.seed);
  return sample_noise<float>(channels, height, width, config.sigma, rng);
}

template <typename T>
struct DistanceRatio {
  Grid<T> alpha;
  Grid<double> ratio;              // g / r after the zero-residual guard
  std::vector<bool> substituted;   // r was zero and replaced by the min positive r
  double mean_ratio = 1.0;
  bool degenerate = false;         // every r was zero; alpha = 1
};

// alpha[h,w] = beta * (ratio[h,w] / mean(ratio) - 1) + 1 with ratio = g / r.
template <typename T>
DistanceRatio<T> distance_ratio_map(const NormMap<T>& g_norms, const NormMap<T>& r_norms,
                                    double beta) {
  require(g_norms.height() == r_norms.height() && g_norms.width() == r_norms.width(),
          ErrorCode::kDimMismatch, "distance_ratio_map: norm maps differ in shape");
  require(!g_norms.empty(), ErrorCode::kInvalidArgument, "distance_ratio_map: empty maps");
  const std::size_t n = g_norms.size();
  DistanceRatio<T> out;
  out.alpha = Grid<T>(g_norms.height(), g_norms.width(), T(1));
  out.ratio = Grid<double>(g_norms.height(), g_norms.width(), 1.0);
  out.substituted.assign(n, false);

  double min_positive = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (r_norms[i] > T{}) min_positive = std::min(min_positive, double(r_norms[i]));
  }
  if (!std::isfinite(min_positive)) {
    out.degenerate = true;
    return out;
  }

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = double(r_norms[i]);
    if (!(r > 0.0)) {
      r = min_positive;
      out.substituted[i] = true;
    }
    out.ratio[i] = double(g_norms[i]) / r;
    sum += out.ratio[i];
  }
  out.mean_ratio = sum / double(n);
  if (!(out.mean_ratio > 0.0)) {
    // g is identically zero: every ratio vanishes and the scale is irrelevant.
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.alpha[i] = T(beta * (out.ratio[i] / out.mean_ratio - 1.0) + 1.0);
  }
  return out;
}

// v = u + alpha (.) g, alpha broadcast across channels.
template <typename T>
Tensor3<T> synthesize(const Tensor3<T>& u, const Grid<T>& alpha, const Tensor3<T>& g) {
  require_same_shape(u, g, "synthesize");
  require(alpha.height() == u.height() && alpha.width() == u.width(), ErrorCode::kDimMismatch,
          "synthesize: alpha spatial dims differ from u");
  Tensor3<T> v = u;
  for (std::size_t c = 0; c < u.channels(); ++c) {
    auto dst = v.channel(c);
    auto noise = g.channel(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha[i] * noise[i];
  }
  return v;
}

// Adds d(loss)/d(u) through v = u + alpha(r(u)) g into `grad_u`, given
// d(loss)/d(v). p and g are constants; positions hit by the zero-residual
// guard contribute no alpha gradient.
template <typename T>
void synthesize_backward(const Tensor3<T>& u, const Tensor3<T>& p, const Tensor3<T>& g,
                         const NormMap<T>& g_norms, const NormMap<T>& r_norms,
                         const DistanceRatio<T>& ratio, double beta, const Tensor3<T>& grad_v,
                         Tensor3<T>& grad_u) {
  require_same_shape(grad_v, u, "synthesize_backward");
  require_same_shape(grad_u, u, "synthesize_backward");
  for (std::size_t i = 0; i < u.size(); ++i) grad_u.storage()[i] += grad_v.storage()[i];
  if (ratio.degenerate || beta == 0.0) return;

  const std::size_t P = u.plane();
  const double P_d = double(P);
  const double m = ratio.mean_ratio;

  // s = d(loss)/d(alpha) per position.
  std::vector<double> s(P, 0.0);
  for (std::size_t c = 0; c < u.channels(); ++c) {
    auto gv = grad_v.channel(c);
    auto gn = g.channel(c);
    for (std::size_t i = 0; i < P; ++i) s[i] += double(gv[i]) * gn[i];
  }
  double s_dot_ratio = 0.0;
  for (std::size_t i = 0; i < P; ++i) s_dot_ratio += s[i] * ratio.ratio[i];

  std::vector<double> coeff(P, 0.0);  // d(loss)/d(u - p) = coeff * (u - p)
  for (std::size_t i = 0; i < P; ++i) {
    if (ratio.substituted[i]) continue;
    const double r = double(r_norms[i]);
    const double d_ratio = beta * s[i] / m - beta * s_dot_ratio / (m * m * P_d);
    const double d_r = d_ratio * (-double(g_norms[i]) / (r * r));
    coeff[i] = d_r / r;
  }
  for (std::size_t c = 0; c < u.channels(); ++c) {
    auto uu = u.channel(c);
    auto pp = p.channel(c);
    auto gu = grad_u.channel(c);
    for (std::size_t i = 0; i < P; ++i) {
      gu[i] += T(coeff[i] * (double(uu[i]) - double(pp[i])));
    }
  }
}

}  // namespace cras
