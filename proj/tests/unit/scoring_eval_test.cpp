#include "cras/scoring_eval.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cras/feature_prep.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace cras {
namespace {

// One input channel, logit = x exactly: (lrelu(x) - lrelu(-x)) / 1.2.
DiscriminatorNet<float> passthrough_disc() {
  DiscriminatorNet<float> d = DiscriminatorNet<float>::make(1, 2, 1);
  d.hidden.weight.values = {1, -1};
  d.hidden.bias = {0, 0};
  d.out.weight.values = {1 / 1.2f, -1 / 1.2f};
  d.out.bias = {0};
  return d;
}

DiscriminatorNet<float> constant_disc(std::size_t in, float logit) {
  DiscriminatorNet<float> d = DiscriminatorNet<float>::make(in, 2, 1);
  for (auto& w : d.out.weight.values) w = 0;
  d.out.bias = {logit};
  return d;
}

TEST(GaussianKernelTest, NormalizedWithRadiusFourSigma) {
  for (double sigma : {0.5, 1.0, 2.5, 4.0}) {
    const auto k = gaussian_kernel(sigma);
    EXPECT_EQ(k.size(), 2 * std::size_t(std::ceil(4 * sigma)) + 1);
    double s = 0;
    for (double v : k) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_TRUE(gaussian_kernel(0.0).empty());
}

TEST(GaussianSmoothTest, ConstantIsFixedPoint) {
  const Grid<float> g(9, 13, 0.3f);
  const auto out = gaussian_smooth(resize_bilinear(g, 31, 17), 4.0);
  for (float v : out.storage()) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(ScoreMapTest, ConstantLogitGivesConstantMap) {
  std::mt19937 gen(1);
  const auto u = random_tensor<float>(3, 4, 4, gen);
  const auto p = random_tensor<float>(3, 4, 4, gen);
  const auto m = score_map(u, p, constant_disc(6, 0.7f), FeatureMode::kRawResidual, 16, 16, 4.0);
  ASSERT_EQ(m.values.height(), 16u);
  for (float v : m.values.storage()) EXPECT_NEAR(v, 1 / (1 + std::exp(-0.7)), 1e-6);
  EXPECT_NEAR(score_image(m), 1 / (1 + std::exp(-0.7)), 1e-6);
}

TEST(ScoreMapTest, ZeroSigmaDisablesSmoothing) {
  std::mt19937 gen(2);
  const auto u = random_tensor<float>(1, 5, 5, gen, -3, 3);
  const auto m = score_map(u, u, passthrough_disc(), FeatureMode::kRaw, 5, 5, 0.0);
  for (std::size_t i = 0; i < u.size(); ++i)
    EXPECT_NEAR(m.values[i], 1 / (1 + std::exp(-double(u.storage()[i]))), 1e-6);
}

TEST(ScoreMapTest, MatchesResizeThenBlurOracle) {
  std::mt19937 gen(3);
  const auto u = random_tensor<float>(1, 8, 8, gen, -4, 4);
  const auto m = score_map(u, u, passthrough_disc(), FeatureMode::kRaw, 64, 64, 4.0);
  Tensor3<double> probs(1, 8, 8);
  for (std::size_t i = 0; i < 64; ++i) probs.storage()[i] = 1 / (1 + std::exp(-double(u.storage()[i])));
  const auto up = oracle::bilinear(probs, 64, 64);
  const auto want = oracle::gaussian_blur_2d(up.storage(), 64, 64, 4.0);
  for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(m.values[i], want[i], 1e-5) << i;
  EXPECT_EQ(score_image(m), *std::max_element(m.values.storage().begin(), m.values.storage().end()));
}

TEST(ScoreMapTest, MonotoneInLogitBeforeSmoothing) {
  std::mt19937 gen(4);
  const auto u = random_tensor<float>(1, 6, 6, gen, -5, 5);
  const auto m = score_map(u, u, passthrough_disc(), FeatureMode::kRaw, 6, 6, 0.0);
  for (std::size_t i = 0; i < 36; ++i)
    for (std::size_t j = 0; j < 36; ++j)
      if (u.storage()[i] > u.storage()[j]) EXPECT_GE(m.values[i], m.values[j]);
}

TEST(ScoreMapTest, RejectsZeroDims) {
  const FeatureMap u(1, 2, 2, 1.0f);
  EXPECT_THROW_CODE(score_map(u, u, passthrough_disc(), FeatureMode::kRaw, 0, 4),
                    ErrorCode::kInvalidArgument);
}

TEST(ScoreImageTest, MaxOfMap) {
  ScoreMap m{Grid<float>(3, 3, 0.1f), "a", "k"};
  EXPECT_FLOAT_EQ(score_image(m), 0.1f);
  m.values(1, 2) = 0.9f;
  EXPECT_FLOAT_EQ(score_image(m), 0.9f);
  std::mt19937 gen(5);
  std::uniform_real_distribution<float> dist(0, 1);
  for (auto& v : m.values.storage()) v = dist(gen);
  float best = 0;
  for (float v : m.values.storage()) best = v > best ? v : best;
  EXPECT_EQ(score_image(m), best);
}

TEST(AurocTest, Examples) {
  const std::vector<double> s = {0.1, 0.2, 0.8, 0.9};
  const std::vector<std::uint8_t> l = {0, 0, 1, 1};
  EXPECT_EQ(auroc(s, l), 1.0);
  const std::vector<double> flat(4, 0.5);
  EXPECT_EQ(auroc(flat, l), 0.5);
  EXPECT_THROW_CODE(auroc(s, std::vector<std::uint8_t>(4, 1)), ErrorCode::kInvalidArgument);
}

TEST(AurocTest, MatchesPairCountingOracle) {
  std::mt19937 gen(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + gen() % 60;
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    const bool coarse = trial % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? double(gen() % 5) : std::uniform_real_distribution<double>(0, 1)(gen);
      l[i] = gen() % 2;
    }
    l[0] = 0;
    l[1] = 1;
    EXPECT_NEAR(auroc(s, l), oracle::auroc_pairs(s, l), 1e-12);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3 * s[i]) - 7;
    EXPECT_NEAR(auroc(t, l), auroc(s, l), 1e-12);
  }
}

TEST(AveragePrecisionTest, Examples) {
  const std::vector<double> s = {0.9, 0.5, 0.4, 0.3};
  EXPECT_EQ(average_precision(s, std::vector<std::uint8_t>{1, 0, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(s, std::vector<std::uint8_t>{0, 0, 0, 1}), 0.25);
  EXPECT_THROW_CODE(average_precision(s, std::vector<std::uint8_t>(4, 0)),
                    ErrorCode::kInvalidArgument);
}

TEST(AveragePrecisionTest, MatchesBruteForceOracle) {
  std::mt19937 gen(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + gen() % 40;
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    const bool coarse = trial % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? double(gen() % 4) : std::uniform_real_distribution<double>(0, 1)(gen);
      l[i] = gen() % 2;
    }
    l[0] = 1;
    EXPECT_NEAR(average_precision(s, l), oracle::ap_bruteforce(s, l), 1e-12);
  }
}

TEST(AurocTest, FloatOverloadAgrees) {
  std::mt19937 gen(8);
  std::vector<float> s(100);
  std::vector<std::uint8_t> l(100);
  for (std::size_t i = 0; i < 100; ++i) {
    s[i] = float(gen() % 10);
    l[i] = i % 3 == 0;
  }
  const std::vector<double> d(s.begin(), s.end());
  EXPECT_EQ(auroc(s, l), auroc(d, l));
  EXPECT_EQ(average_precision(s, l), average_precision(d, l));
}

// Single-channel world: the center is all ones, anomalies raise a 2x2 block.
struct ToyWorld {
  ModelParams model;
  CenterBank bank;
  std::vector<EvalSample> samples;
};

ToyWorld toy_world(bool with_masks) {
  ToyWorld w;
  w.model.adapter = AdapterNet<float>::identity_init(1, 0, 0.0);
  w.model.discriminator = passthrough_disc();
  w.bank.centers.emplace_back("k", FeatureMap(1, 4, 4, 1.0f));
  for (int i = 0; i < 4; ++i) {
    EvalSample s{"n" + std::to_string(i), "k", Label::kNormal, FeatureMap(1, 4, 4, 1.0f), {}};
    if (with_masks) s.mask = Mask(8, 8, 0);
    w.samples.push_back(s);
  }
  for (int i = 0; i < 3; ++i) {
    EvalSample s{"a" + std::to_string(i), "k", Label::kAnomalous, FeatureMap(1, 4, 4, 1.0f), {}};
    for (int h = 0; h < 2; ++h)
      for (int x = 0; x < 2; ++x) s.features(0, h + i % 2, x + 1) = 3.0f + float(i);
    if (with_masks) {
      Mask m(8, 8, 0);
      for (int h = 0; h < 4; ++h)
        for (int x = 0; x < 4; ++x) m(2 * (i % 2) + h, 2 + x) = 255;
      s.mask = m;
    }
    w.samples.push_back(s);
  }
  return w;
}

TEST(EvaluateTest, SeparatedScoresGivePerfectImageAuroc) {
  const auto w = toy_world(true);
  EvalConfig cfg;
  cfg.feature_mode = FeatureMode::kRaw;
  cfg.smooth_sigma = 1.0;
  const auto report = evaluate(w.samples, w.model, w.bank, cfg);
  ASSERT_EQ(report.categories.size(), 1u);
  EXPECT_EQ(report.categories[0].metrics.i_auroc, 1.0);
  EXPECT_EQ(report.mean.i_auroc, 1.0);
  EXPECT_TRUE(report.pixel_metrics_available);
  EXPECT_GT(*report.mean.p_auroc, 0.9);
  EXPECT_EQ(report.categories[0].matched_correctly, 7u);
  EXPECT_EQ(report.image_scores.size(), 7u);
}

TEST(EvaluateTest, AllNormalMasksFlagPixelMetrics) {
  auto w = toy_world(true);
  w.samples.resize(4);
  const auto report = evaluate(w.samples, w.model, w.bank, {.feature_mode = FeatureMode::kRaw});
  EXPECT_FALSE(report.pixel_metrics_available);
  EXPECT_FALSE(report.mean.p_auroc.has_value());
  EXPECT_FALSE(report.mean.i_auroc.has_value());
  EXPECT_FALSE(report.pixel_metrics_note.empty());
}

TEST(EvaluateTest, MissingAnomalousMaskOmitsPixelMetrics) {
  const auto w = toy_world(false);
  const auto report = evaluate(w.samples, w.model, w.bank, {.feature_mode = FeatureMode::kRaw});
  EXPECT_FALSE(report.pixel_metrics_available);
  EXPECT_FALSE(report.categories[0].metrics.p_auroc.has_value());
  EXPECT_TRUE(report.categories[0].metrics.i_auroc.has_value());
  const auto j = report_to_json(report);
  EXPECT_EQ(j.at("report_version"), 1);
  EXPECT_TRUE(j.at("mean").at("p_auroc").is_null());
  EXPECT_NE(report_table(report).find("n/a"), std::string::npos);
}

TEST(EvaluateTest, WritesScoreMaps) {
  TempDir dir;
  const auto w = toy_world(true);
  EvalConfig cfg;
  cfg.feature_mode = FeatureMode::kRaw;
  cfg.score_dir = dir.path() / "scores";
  cfg.write_pgm = true;
  evaluate(w.samples, w.model, w.bank, cfg);
  const auto map = as_float_grid(read_tensor(dir.path() / "scores" / "a0.crft"));
  EXPECT_EQ(map.height(), 8u);
  const std::string pgm = read_file(dir.path() / "scores" / "a0.pgm");
  EXPECT_EQ(pgm.substr(0, 9), "P5\n8 8\n25");
  EXPECT_EQ(pgm.size(), std::string("P5\n8 8\n255\n").size() + 64);
}

TEST(EvaluateTest, WorkersDoNotChangeResults) {
  const auto w = toy_world(true);
  EvalConfig cfg;
  cfg.feature_mode = FeatureMode::kRaw;
  const auto a = report_to_json(evaluate(w.samples, w.model, w.bank, cfg));
  cfg.workers = 3;
  EXPECT_EQ(report_to_json(evaluate(w.samples, w.model, w.bank, cfg)), a);
}

}  // namespace
}  // namespace cras
