#include <gtest/gtest.h>

#include <cmath>

#include "localization.hpp"
#include "maevi/motion_filter.hpp"
#include "oracles.hpp"

using namespace maevi;

namespace {

VoxelGrid grid_of(Tensor data) {
  VoxelGrid g;
  g.n_time_bins = data.dim(1);
  g.data = std::move(data);
  return g;
}

std::array<Tensor, 4> random_frames(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::array<Tensor, 4> f;
  for (auto& t : f) t = oracle::random_tensor({3, h, w}, rng, 0.0, 1.0);
  return f;
}

RegionFilter random_filter(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  return {oracle::random_tensor({4, h, w}, rng, 0.0, 1.0), {1.0}};
}

}  // namespace

TEST(Activity, ZeroGridGivesZero) {
  const Tensor a = activity(grid_of(Tensor({4, 3, 5, 6})));
  EXPECT_EQ(a.shape(), (Shape{4, 5, 6}));
  for (double v : a.data()) EXPECT_EQ(v, 0.0);
}

TEST(Activity, OppositePolaritiesDoNotCancel) {
  Tensor v({4, 2, 3, 3});
  v(1, 0, 2, 1) = 1.0;
  v(1, 1, 2, 1) = -1.0;
  EXPECT_EQ(activity(grid_of(v))(1, 2, 1), 2.0);
}

TEST(Activity, MatchesLoopOracleAndIsMonotone) {
  std::mt19937_64 rng(61);
  const Tensor v = oracle::random_tensor({4, 5, 6, 7}, rng, -3.0, 3.0);
  const Tensor a = activity(grid_of(v));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t x = 0; x < 7; ++x) {
        double s = 0.0;
        for (std::size_t b = 0; b < 5; ++b) s += std::abs(v(i, b, y, x));
        EXPECT_EQ(a(i, y, x), s);
      }
  Tensor more = v.detach();
  more(2, 3, 4, 5) += (more(2, 3, 4, 5) >= 0 ? 1.0 : -1.0) * 0.7;
  more(2, 1, 4, 5) = -more(2, 1, 4, 5) * 2.0;
  EXPECT_GE(activity(grid_of(more))(2, 4, 5), a(2, 4, 5));
}

TEST(Normalize, ZeroPlaneStaysZero) {
  for (double v : oracle::values(normalize_planes(Tensor({2, 4, 4})))) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, SingleValuePlane) {
  Tensor a({1, 3, 3});
  a(0, 1, 2) = 5.0;
  const Tensor n = normalize_planes(a);
  EXPECT_NEAR(n(0, 1, 2), 1.0, 1e-8);
  EXPECT_EQ(n(0, 0, 0), 0.0);
}

TEST(Normalize, RandomPlanePeak) {
  std::mt19937_64 rng(62);
  const Tensor a = oracle::random_tensor({4, 8, 9}, rng, 0.0, 7.0);
  const Tensor n = normalize_planes(a);
  for (std::size_t i = 0; i < 4; ++i) {
    double peak = 0.0, out_peak = 0.0;
    for (std::size_t p = 0; p < 72; ++p) {
      peak = std::max(peak, a.data()[i * 72 + p]);
      out_peak = std::max(out_peak, n.data()[i * 72 + p]);
    }
    EXPECT_EQ(out_peak, peak / (peak + kNormalizeEps));
  }
}

TEST(GaussianCascade, KernelRadiusAndMass) {
  const auto k = gaussian_kernel(2.0);
  EXPECT_EQ(k.size(), 2 * static_cast<std::size_t>(std::ceil(kGaussianTruncation * 2.0)) + 1);
  double total = 0.0;
  for (double v : k) total += v;
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_THROW(gaussian_kernel(0.0), std::invalid_argument);
}

TEST(GaussianCascade, ImpulseMatchesCombinedGaussian) {
  const std::size_t n = 61, c = 30;
  Tensor impulse({1, n, n});
  impulse(0, c, c) = 1.0;
  const RegionFilter f = gaussian_cascade(impulse, {1.0, 2.0});
  // sigma_eff^2 = 1 + 4; interior excludes the reflected tails.
  double worst = 0.0;
  for (std::size_t y = 15; y < 46; ++y)
    for (std::size_t x = 15; x < 46; ++x) {
      const double dy = static_cast<double>(y) - c, dx = static_cast<double>(x) - c;
      const double expected = std::exp(-(dy * dy + dx * dx) / 10.0);
      worst = std::max(worst, std::abs(f.weights(0, y, x) - expected));
    }
  EXPECT_LT(worst, 1e-6);
}

TEST(GaussianCascade, ZeroInputGivesZeroFilter) {
  for (double v : oracle::values(gaussian_cascade(Tensor({4, 8, 8}), {1.0, 2.0}).weights)) EXPECT_EQ(v, 0.0);
}

TEST(GaussianCascade, ConstantPlaneIsPreserved) {
  for (double v : oracle::values(gaussian_blur(Tensor::ones({1, 12, 9}), 2.0))) EXPECT_NEAR(v, 1.0, 1e-12);
  for (double v : oracle::values(gaussian_cascade(Tensor::ones({1, 12, 9}), {1.0, 2.0}).weights)) EXPECT_NEAR(v, 1.0, 1e-7);
}

TEST(GaussianCascade, WeightsStayInUnitInterval) {
  std::mt19937_64 rng(63);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor v = oracle::random_tensor({4, 3, 10, 11}, rng, -2.0, 2.0);
    const RegionFilter f = region_filter(grid_of(v), {1.0, 2.0});
    for (double w : f.weights.data()) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
    }
    for (double w : oracle::values(loss_filter(f).weights)) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
    }
  }
}

TEST(GaussianCascade, ZeroBeyondSupport) {
  Tensor v({4, 2, 40, 40});
  v(0, 1, 5, 5) = 1.0;
  const RegionFilter f = region_filter(grid_of(v), {1.0, 2.0});
  // Support of the two kernels combined: 5 + 10 pixels per axis.
  EXPECT_GT(f.weights(0, 5, 5), 0.99);
  EXPECT_EQ(f.weights(0, 5, 21), 0.0);
  EXPECT_EQ(f.weights(0, 25, 5), 0.0);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(f.weights(i, 5, 5), 0.0);
}

TEST(ApplyFilter, OnesIsIdentityZerosIsBlack) {
  std::mt19937_64 rng(64);
  const auto frames = random_frames(5, 6, rng);
  const auto same = apply_filter(frames, ones_filter(5, 6));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(oracle::max_abs_diff(same[i].data(), frames[i].data()), 0.0);
  const auto black = apply_filter(frames, RegionFilter{Tensor({4, 5, 6}), {}});
  for (const auto& f : black)
    for (double v : f.data()) EXPECT_EQ(v, 0.0);
}

TEST(ApplyFilter, MatchesLoopOracle) {
  std::mt19937_64 rng(65);
  const auto frames = random_frames(7, 4, rng);
  const RegionFilter f = random_filter(7, 4, rng);
  const auto out = apply_filter(frames, f);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 7; ++y)
        for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(out[i](c, y, x), frames[i](c, y, x) * f.weights(i, y, x));
}

TEST(ApplyFilter, ShapeMismatchThrows) {
  std::mt19937_64 rng(66);
  EXPECT_THROW(apply_filter(random_frames(5, 6, rng), ones_filter(6, 5)), std::exception);
}

TEST(LossFilter, AveragesAdjacentIntervals) {
  std::mt19937_64 rng(67);
  const RegionFilter f = random_filter(6, 5, rng);
  const Tensor lf = loss_filter(f).weights;
  EXPECT_EQ(lf.shape(), (Shape{6, 5}));
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(lf(y, x), (f.weights(1, y, x) + f.weights(2, y, x)) / 2.0);

  Tensor same({4, 3, 3}, 0.0);
  Tensor split({4, 3, 3}, 0.0);
  for (std::size_t p = 0; p < 9; ++p) {
    for (std::size_t i = 0; i < 4; ++i) same.data()[i * 9 + p] = 0.1 * static_cast<double>(p);
    split.data()[9 + p] = 1.0;
  }
  const Tensor lsame = loss_filter({same, {}}).weights;
  for (std::size_t p = 0; p < 9; ++p) EXPECT_DOUBLE_EQ(lsame.data()[p], 0.1 * static_cast<double>(p));
  for (double v : oracle::values(loss_filter({split, {}}).weights)) EXPECT_EQ(v, 0.5);
}

TEST(MotionFilter, LocalizesMovingRectangleEdges) {
  const auto loc = oracle::measure_localization(oracle::moving_rectangle());
  EXPECT_GT(loc.near_mean, 0.0);
  EXPECT_GE(loc.ratio(), 5.0) << "near " << loc.near_mean << " far " << loc.far_mean;
}
