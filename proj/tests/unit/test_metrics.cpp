#include <gtest/gtest.h>

#include <cmath>

#include "flowforge/metrics.hpp"
#include "flowforge/resample.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace flowforge;
using namespace flowforge::testing;

namespace {

FlowFieldf single(float u, float v) {
  FlowFieldf f(1, 1);
  f.u(0, 0) = u;
  f.v(0, 0) = v;
  return f;
}

}  // namespace

TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937 rng(11);
  for (int i = 0; i < 50; ++i) {
    const FlowFieldf a = random_flow(13, 17, rng, 40.0);
    const FlowFieldf b = random_flow(13, 17, rng, 40.0);
    const double e = brute_epe(a, b);
    EXPECT_NEAR(epe(a, b), e, 1e-6 * e);
    const double f = brute_fl(a, b);
    EXPECT_NEAR(fl_all(a, b), f, 1e-6 * std::max(f, 1e-12));
  }
}

TEST(Metrics, EpeOfIdenticalFieldsIsZero) {
  std::mt19937 rng(1);
  const FlowFieldf a = random_flow(4, 4, rng, 3.0);
  EXPECT_EQ(epe(a, a), 0.0);
  EXPECT_EQ(fl_all(a, a), 0.0);
}

TEST(Metrics, EpeIsPythagorean) { EXPECT_DOUBLE_EQ(epe(single(3, 4), single(0, 0)), 5.0); }

TEST(Metrics, FlAllNeedsBothThresholds) {
  // 3 px error against a 100 px truth: 3% of magnitude, not an outlier
  EXPECT_EQ(fl_all(single(103, 0), single(100, 0)), 0.0);
  // 5.5 px error against 100 px truth: both conditions hold
  EXPECT_EQ(fl_all(single(105.5f, 0), single(100, 0)), 1.0);
  // 2.9 px error on a small truth: relative condition holds, absolute does not
  EXPECT_EQ(fl_all(single(3.9f, 0), single(1, 0)), 0.0);
  // exactly 3 px on a zero truth is an outlier
  EXPECT_EQ(fl_all(single(3, 0), single(0, 0)), 1.0);
  EXPECT_EQ(fl_all(single(2.999f, 0), single(0, 0)), 0.0);
}

TEST(Metrics, MaskRestrictsPixels) {
  FlowFieldf est(1, 2), truth(1, 2);
  est.u(0, 1) = 10.0f;
  Gridf mask(1, 2, 1);
  mask(0, 0) = 1.0f;
  EXPECT_EQ(epe(est, truth, mask), 0.0);
  mask(0, 1) = 1.0f;
  EXPECT_DOUBLE_EQ(epe(est, truth, mask), 5.0);
  EXPECT_ERROR_CODE(epe(est, truth, Gridf(1, 2, 1)), ErrorCode::EmptyMask);
  EXPECT_ERROR_CODE(epe(est, FlowFieldf(2, 1)), ErrorCode::DimMismatch);
  EXPECT_ERROR_CODE(fl_all(est, truth, Gridf(2, 2, 1)), ErrorCode::DimMismatch);
}

TEST(Metrics, HistogramCountsEveryPixelOnce) {
  std::mt19937 rng(8);
  std::vector<FlowFieldf> flows{random_flow(5, 6, rng, 5.0), random_flow(3, 3, rng, 5.0), FlowFieldf(2, 2)};
  const std::vector<double> edges{0.0, 0.5, 1.0, 2.0, 4.0};
  const Histogram h = displacement_histogram(flows, edges);
  EXPECT_EQ(h.total, 30 + 9 + 4);
  std::int64_t sum = 0;
  for (auto c : h.counts) sum += c;
  EXPECT_EQ(sum, h.total);
  EXPECT_GE(h.counts.front(), 4);
  const Histogram nz = nonzero_displacement_histogram(flows, edges);
  EXPECT_EQ(nz.total, 39);
  EXPECT_ERROR_CODE(displacement_histogram(flows, std::vector<double>{1.0}), ErrorCode::BadBins);
  EXPECT_ERROR_CODE(displacement_histogram(flows, std::vector<double>{1.0, 0.5}), ErrorCode::BadBins);
}

TEST(Resample, UpsampleCopiesValues) {
  std::mt19937 rng(3);
  const Gridf g = random_grid<float>(3, 4, 2, rng);
  const Gridf up = upsample_nn(g, 3);
  ASSERT_EQ(up.height(), 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 12; ++x) EXPECT_EQ(up(y, x, 1), g(y / 3, x / 3, 1));
}

TEST(Resample, DownsampleInvertsUpsample) {
  std::mt19937 rng(3);
  const Gridf g = random_grid<float>(5, 7, 3, rng);
  EXPECT_TRUE(((downsample_avg(upsample_nn(g, 2), 2).data() - g.data()).abs() < 1e-6f).all());
  EXPECT_TRUE(((downsample_to(upsample_nn(g, 4), 5, 7).data() - g.data()).abs() < 1e-6f).all());
}

TEST(Resample, DownsampleToMatchesAvgWhenDivisible) {
  std::mt19937 rng(9);
  const Gridf g = random_grid<float>(12, 16, 2, rng);
  EXPECT_EQ(downsample_to(g, 3, 4), downsample_avg(g, 4));
}

TEST(Resample, DownsampleToPreservesMeanOfConstant) {
  const Gridf g = Gridf::constant(48, 64, 2, 1.25f);
  const Gridf d = downsample_to(g, 5, 7);
  EXPECT_TRUE(((d.data() - 1.25f).abs() < 1e-6f).all());
  EXPECT_ERROR_CODE(downsample_to(g, 49, 7), ErrorCode::BadDims);
  EXPECT_ERROR_CODE(downsample_avg(g, 5), ErrorCode::BadDims);
}
