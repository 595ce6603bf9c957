#include "cras/feature_prep.hpp"

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

namespace cras {
namespace {

FeatureMap from_double(const Tensor3<double>& x) { return x.cast<float>(); }

void expect_near_all(const FeatureMap& got, const Tensor3<double>& want, double tol) {
  ASSERT_EQ(got.channels(), want.channels());
  ASSERT_EQ(got.height(), want.height());
  ASSERT_EQ(got.width(), want.width());
  for (std::size_t i = 0; i < got.size(); ++i)
    ASSERT_NEAR(got.storage()[i], want.storage()[i], tol) << "flat index " << i;
}

TEST(AggregateNeighborhoodTest, ReplicatedEdgesOnRow) {
  const FeatureMap row(1, 1, 3, std::vector<float>{1, 2, 3});
  const FeatureMap out = aggregate_neighborhood(row, 3);
  EXPECT_NEAR(out(0, 0, 0), 4.0 / 3.0, 1e-6);
  EXPECT_NEAR(out(0, 0, 1), 2.0, 1e-6);
  EXPECT_NEAR(out(0, 0, 2), 8.0 / 3.0, 1e-6);
}

TEST(AggregateNeighborhoodTest, ConstantMapUnchanged) {
  const FeatureMap map(3, 5, 4, 2.5f);
  for (int p : {1, 3, 5, 7}) EXPECT_EQ(aggregate_neighborhood(map, p), map);
}

TEST(AggregateNeighborhoodTest, PatchOneIsIdentity) {
  std::mt19937 gen(1);
  const auto map = random_tensor<float>(4, 6, 5, gen);
  EXPECT_EQ(aggregate_neighborhood(map, 1), map);
}

TEST(AggregateNeighborhoodTest, RejectsEvenPatch) {
  EXPECT_THROW_CODE(aggregate_neighborhood(FeatureMap(1, 2, 2), 2), ErrorCode::kInvalidArgument);
  EXPECT_THROW_CODE(aggregate_neighborhood(FeatureMap(1, 2, 2), 0), ErrorCode::kInvalidArgument);
}

TEST(AggregateNeighborhoodTest, MatchesWindowOracle) {
  std::mt19937 gen(2);
  for (int p : {3, 5}) {
    const auto x = random_tensor<double>(3, 7, 9, gen);
    expect_near_all(aggregate_neighborhood(from_double(x), p), oracle::window_average(x, p), 1e-6);
  }
}

TEST(AggregateNeighborhoodTest, Linear) {
  std::mt19937 gen(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_tensor<float>(3, 6, 6, gen);
    const auto y = random_tensor<float>(3, 6, 6, gen);
    const float a = 1.7f, b = -0.4f;
    FeatureMap combo(3, 6, 6);
    for (std::size_t i = 0; i < combo.size(); ++i)
      combo.storage()[i] = a * x.storage()[i] + b * y.storage()[i];
    const auto lhs = aggregate_neighborhood(combo, 3);
    const auto ax = aggregate_neighborhood(x, 3);
    const auto ay = aggregate_neighborhood(y, 3);
    for (std::size_t i = 0; i < lhs.size(); ++i)
      ASSERT_NEAR(lhs.storage()[i], a * ax.storage()[i] + b * ay.storage()[i], 1e-5);
  }
}

TEST(ResizeBilinearTest, SameSizeIsIdentity) {
  std::mt19937 gen(4);
  const auto x = random_tensor<float>(2, 5, 3, gen);
  EXPECT_EQ(resize_bilinear(x, 5, 3), x);
}

TEST(ResizeBilinearTest, MatchesPixelCenterOracle) {
  std::mt19937 gen(5);
  const auto x = random_tensor<double>(2, 3, 5, gen);
  expect_near_all(resize_bilinear(from_double(x), 7, 11), oracle::bilinear(x, 7, 11), 1e-6);
  expect_near_all(resize_bilinear(from_double(x), 2, 2), oracle::bilinear(x, 2, 2), 1e-6);
}

TEST(ResizeBilinearTest, RejectsZeroTarget) {
  EXPECT_THROW_CODE(resize_bilinear(FeatureMap(1, 2, 2), 0, 2), ErrorCode::kInvalidArgument);
}

TEST(GroupedChannelMeanTest, PreservesPositionMeanWhenDivisible) {
  std::mt19937 gen(6);
  const auto x = random_tensor<float>(12, 3, 3, gen);
  for (std::size_t target : {1u, 2u, 3u, 4u, 6u, 12u}) {
    const auto out = grouped_channel_mean(x, target);
    ASSERT_EQ(out.channels(), target);
    for (std::size_t q = 0; q < x.plane(); ++q) {
      double a = 0, b = 0;
      for (std::size_t c = 0; c < 12; ++c) a += x.storage()[c * x.plane() + q];
      for (std::size_t c = 0; c < target; ++c) b += out.storage()[c * x.plane() + q];
      EXPECT_NEAR(a / 12.0, b / double(target), 1e-6);
    }
  }
}

TEST(GroupedChannelMeanTest, RejectsTargetAboveChannels) {
  EXPECT_THROW_CODE(grouped_channel_mean(FeatureMap(3, 1, 1), 4), ErrorCode::kInvalidArgument);
}

TEST(MergeHierarchiesTest, SingleLevelEqualsAggregation) {
  std::mt19937 gen(7);
  const auto x = random_tensor<float>(5, 6, 6, gen);
  PrepConfig cfg;
  cfg.levels_used = {2};
  EXPECT_EQ(merge_hierarchies({{2, x}}, cfg), aggregate_neighborhood(x, 3));
}

TEST(MergeHierarchiesTest, EqualDimsStackChannels) {
  std::mt19937 gen(8);
  const auto a = random_tensor<float>(2, 4, 4, gen);
  const auto b = random_tensor<float>(2, 4, 4, gen);
  const auto out = merge_hierarchies({{2, a}, {3, b}}, PrepConfig{});
  ASSERT_EQ(out.channels(), 4u);
  const auto aa = aggregate_neighborhood(a, 3);
  const auto bb = aggregate_neighborhood(b, 3);
  for (std::size_t i = 0; i < aa.size(); ++i) {
    EXPECT_EQ(out.storage()[i], aa.storage()[i]);
    EXPECT_EQ(out.storage()[aa.size() + i], bb.storage()[i]);
  }
}

TEST(MergeHierarchiesTest, MatchesComposedOracle) {
  std::mt19937 gen(9);
  const auto l2 = random_tensor<double>(4, 4, 4, gen);
  const auto l3 = random_tensor<double>(8, 2, 2, gen);
  PrepConfig cfg;
  cfg.target_channels = 6;
  const auto out = merge_hierarchies({{2, from_double(l2)}, {3, from_double(l3)}}, cfg);
  ASSERT_EQ(out.channels(), 6u);
  ASSERT_EQ(out.height(), 4u);
  ASSERT_EQ(out.width(), 4u);

  const auto a2 = oracle::window_average(l2, 3);
  const auto a3 = oracle::bilinear(oracle::window_average(l3, 3), 4, 4);
  Tensor3<double> cat(12, 4, 4);
  for (std::size_t i = 0; i < a2.size(); ++i) cat.storage()[i] = a2.storage()[i];
  for (std::size_t i = 0; i < a3.size(); ++i) cat.storage()[a2.size() + i] = a3.storage()[i];
  Tensor3<double> want(6, 4, 4);
  for (std::size_t g = 0; g < 6; ++g)
    for (std::size_t q = 0; q < 16; ++q) {
      double s = 0;
      const std::size_t lo = g * 12 / 6, hi = (g + 1) * 12 / 6;
      for (std::size_t c = lo; c < hi; ++c) s += cat.storage()[c * 16 + q];
      want.storage()[g * 16 + q] = s / double(hi - lo);
    }
  expect_near_all(out, want, 1e-6);
}

TEST(MergeHierarchiesTest, OutputTakesShallowestDims) {
  PrepConfig cfg;
  cfg.levels_used = {2, 3};
  const auto out =
      merge_hierarchies({{1, FeatureMap(1, 16, 16, 1)}, {2, FeatureMap(2, 8, 8, 1)},
                         {3, FeatureMap(3, 4, 4, 1)}},
                        cfg);
  EXPECT_EQ(out.channels(), 5u);
  EXPECT_EQ(out.height(), 8u);
  EXPECT_EQ(out.width(), 8u);
}

TEST(MergeHierarchiesTest, Errors) {
  PrepConfig cfg;
  EXPECT_THROW_CODE(merge_hierarchies({{2, FeatureMap(1, 4, 4)}}, cfg),
                    ErrorCode::kInvalidArgument);
  cfg.target_channels = 5;
  EXPECT_THROW_CODE(
      merge_hierarchies({{2, FeatureMap(2, 4, 4)}, {3, FeatureMap(2, 2, 2)}}, cfg),
      ErrorCode::kInvalidArgument);
  EXPECT_THROW_CODE(
      validate_stack({{3, FeatureMap(1, 4, 4)}, {2, FeatureMap(1, 2, 2)}}),
      ErrorCode::kInvalidArgument);
  PrepConfig bad;
  bad.patch_size = 4;
  EXPECT_THROW_CODE(bad.validate(), ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace cras
