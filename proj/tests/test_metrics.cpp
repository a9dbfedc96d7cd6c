#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "rrecon/metrics.hpp"

using namespace rrecon;

namespace {

std::vector<double> random_image(std::size_t n, std::uint64_t seed, double hi = 100.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Mean SSIM over unweighted 5x5 windows with symmetric padding on a 7x7 image.
double ssim_box_brute_force(const std::vector<double>& x, const std::vector<double>& y, double l) {
  const double c1 = (0.01 * l) * (0.01 * l), c2 = (0.03 * l) * (0.03 * l);
  double total = 0.0;
  for (long j = 0; j < 7; ++j)
    for (long i = 0; i < 7; ++i) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (long b = -2; b <= 2; ++b)
        for (long a = -2; a <= 2; ++a) {
          const std::size_t k = detail::reflect(j + b, 7) * 7 + detail::reflect(i + a, 7);
          mx += x[k], my += y[k];
          sxx += x[k] * x[k], syy += y[k] * y[k], sxy += x[k] * y[k];
        }
      mx /= 25, my /= 25;
      sxx = sxx / 25 - mx * mx, syy = syy / 25 - my * my, sxy = sxy / 25 - mx * my;
      total += (2 * mx * my + c1) * (2 * sxy + c2) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    }
  return total / 49.0;
}

}  // namespace

TEST(Psnr, Examples) {
  const std::vector<double> ref(100, 50.0);
  std::vector<double> x = ref;
  EXPECT_EQ(psnr(x, ref, 100.0), std::numeric_limits<double>::infinity());
  for (double& v : x) v += 1.0;
  EXPECT_NEAR(psnr(x, ref, 100.0), 40.0, 1e-12);
  EXPECT_THROW(psnr(x, std::vector<double>(3), 100.0), ConfigError);
  EXPECT_THROW(psnr(x, ref, 0.0), ConfigError);
}

TEST(Psnr, ScalingBothImagesAndPeakIsInvariant) {
  const auto x = random_image(64, 1), y = random_image(64, 2);
  std::vector<double> xs = x, ys = y;
  for (auto& v : xs) v *= 3.0;
  for (auto& v : ys) v *= 3.0;
  EXPECT_NEAR(psnr(xs, ys, 300.0), psnr(x, y, 100.0), 1e-10);
}

TEST(Psnr, ConsistentWithMse) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto x = random_image(37, 10 + s), y = random_image(37, 100 + s);
    double mse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mse += (x[i] - y[i]) * (x[i] - y[i]);
    mse /= static_cast<double>(x.size());
    EXPECT_NEAR(std::pow(10.0, -psnr(x, y, 100.0) / 10.0) * 100.0 * 100.0, mse, 1e-9 * mse);
  }
}

TEST(Ssim, IdentityAndSymmetry) {
  const VoxelGrid g = centered_grid({16, 12, 1}, {1, 1, 1});
  const auto x = random_image(g.size(), 3), y = random_image(g.size(), 4);
  EXPECT_NEAR(ssim(x, x, g, 100.0), 1.0, 1e-12);
  EXPECT_NEAR(ssim(x, y, g, 100.0), ssim(y, x, g, 100.0), 1e-14);
  const double v = ssim(x, y, g, 100.0);
  EXPECT_LE(v, 1.0);
  EXPECT_GE(v, -1.0);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const VoxelGrid g = centered_grid({9, 9, 1}, {1, 1, 1});
  const double a = 20.0, b = 60.0, l = 100.0, c1 = (0.01 * l) * (0.01 * l);
  const std::vector<double> x(g.size(), a), y(g.size(), b);
  EXPECT_NEAR(ssim(x, y, g, l), (2 * a * b + c1) / (a * a + b * b + c1), 1e-12);
}

TEST(Ssim, BoundedOnRandomPairs) {
  const VoxelGrid g = centered_grid({10, 10, 3}, {1, 1, 1});
  for (std::uint64_t s = 0; s < 20; ++s) {
    const double v = ssim(random_image(g.size(), s), random_image(g.size(), 50 + s), g, 100.0);
    EXPECT_LE(v, 1.0);
    EXPECT_GE(v, -1.0);
  }
}

TEST(Ssim, CloseToUnweightedWindowOnSmallImages) {
  const VoxelGrid g = centered_grid({7, 7, 1}, {1, 1, 1});
  std::mt19937_64 rng(6);
  std::normal_distribution<double> noise(0.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(g.size()), y(g.size());
    for (std::size_t j = 0; j < 7; ++j)
      for (std::size_t i = 0; i < 7; ++i) {
        x[j * 7 + i] = 50.0 + 30.0 * std::sin(0.3 * i + trial) * std::cos(0.25 * j);
        y[j * 7 + i] = x[j * 7 + i] + noise(rng);
      }
    EXPECT_NEAR(ssim(x, y, g, 100.0), ssim_box_brute_force(x, y, 100.0), 0.05) << "trial " << trial;
  }
}

TEST(Ssim, Errors) {
  const VoxelGrid g = centered_grid({4, 4, 1}, {1, 1, 1});
  const std::vector<double> x(16, 1.0);
  EXPECT_THROW(ssim(x, std::vector<double>(15, 1.0), g, 100.0), ConfigError);
  EXPECT_THROW(ssim(x, x, g, 0.0), ConfigError);
  EXPECT_THROW(ssim(x, x, g, 100.0, SsimWindow{10, 1.5}), ConfigError);
}

TEST(Reference, HalfSpaceRasterization) {
  const VoxelGrid g = centered_grid({4, 1, 1}, {1, 1, 1});  // centers -1.5 .. 1.5
  const Support half = HalfSpace{{1.0, 0.0, 0.0}, 0.0};
  const ReferenceImage r = rasterize_reference(half, {0, 0, 0}, g, 10.0);
  EXPECT_EQ(r.values, (std::vector<double>{10, 10, 0, 0}));
  const ReferenceImage shifted = rasterize_reference(half, {0.5, 0, 0}, g, 10.0);
  EXPECT_EQ(shifted.values, (std::vector<double>{10, 10, 5, 0}));
  EXPECT_THROW(rasterize_reference(Support{}, {0, 0, 0}, g, 10.0), ConfigError);
}

TEST(ShiftGrid, SizeAndOrder) {
  const ShiftGrid g = make_shift_grid({3.0, 3.0, 3.0}, 0.5);
  EXPECT_EQ(g.size(), 13u * 13u * 13u);
  EXPECT_EQ(g.shifts.front(), (Vec3{-3, -3, -3}));
  EXPECT_EQ(g.shifts[1], (Vec3{-3, -3, -2.5}));
  EXPECT_EQ(g.shifts[13], (Vec3{-3, -2.5, -3}));
  EXPECT_EQ(g.shifts.back(), (Vec3{3, 3, 3}));
  EXPECT_EQ(make_shift_grid({3.0, 3.0, 0.0}, 0.5).size(), 169u);
  EXPECT_THROW(make_shift_grid({1.0, 1.0, 1.0}, 0.0), ConfigError);
  EXPECT_THROW(make_shift_grid({1.0, 1.0, 1.0}, 0.3), ConfigError);
}

TEST(ShiftMaximum, MatchesBruteForceAndFindsShift) {
  const VoxelGrid g = centered_grid({12, 12, 1}, {0.5, 0.5, 0.5});
  const Support disc = Cone{{0.0, 0.0, -1.0}, {0.0, 0.0, 1.0}, 1.2, 0.0, 2.0};
  const ShiftGrid shifts = make_shift_grid({1.0, 1.0, 0.0}, 0.5);
  const MetricParams params;
  const std::vector<double> x = rasterize(disc, g, {0.5, -1.0, 0.0}, 50.0, 4);
  const ReferenceBank bank = make_reference_bank(disc, g, shifts, 50.0);
  for (QualityMetric m : {QualityMetric::Psnr, QualityMetric::Ssim}) {
    const ShiftMaximum best = shift_max_metric(x, bank, m, params);
    double brute = -std::numeric_limits<double>::infinity();
    for (const Vec3& s : shifts.shifts) {
      const auto ref = rasterize(disc, g, s, 50.0, 4);
      brute = std::max(brute, m == QualityMetric::Psnr ? psnr(x, ref, params.peak) : ssim(x, ref, g, params.dynamic_range));
    }
    EXPECT_EQ(best.value, brute);
    EXPECT_EQ(best.argmax, (Vec3{0.5, -1.0, 0.0}));
    EXPECT_EQ(best.per_shift.size(), shifts.size());
  }
}

TEST(ShiftMaximum, MonotoneOnNestedGrids) {
  const VoxelGrid g = centered_grid({10, 10, 1}, {0.5, 0.5, 0.5});
  const Support disc = Cone{{0.0, 0.0, -1.0}, {0.0, 0.0, 1.0}, 1.0, 0.0, 2.0};
  const auto x = random_image(g.size(), 9, 50.0);
  const MetricParams params;
  double prev = -std::numeric_limits<double>::infinity();
  for (double extent : {0.0, 0.5, 1.0, 1.5}) {
    const double v =
        shift_max_metric(x, disc, g, make_shift_grid({extent, extent, 0.0}, 0.5), QualityMetric::Ssim, params, 50.0).value;
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(QualityReport, CollectsBothMetrics) {
  const VoxelGrid g = centered_grid({8, 8, 1}, {0.5, 0.5, 0.5});
  const Support disc = Cone{{0.0, 0.0, -1.0}, {0.0, 0.0, 1.0}, 1.0, 0.0, 2.0};
  const ReferenceBank bank = make_reference_bank(disc, g, make_shift_grid({0.5, 0.5, 0.0}, 0.5), 50.0);
  const auto x = random_image(g.size(), 12, 50.0);
  const QualityReport q = quality_report(x, bank, MetricParams{});
  EXPECT_EQ(q.shifts.size(), 9u);
  EXPECT_EQ(q.eps_psnr, *std::max_element(q.psnr_per_shift.begin(), q.psnr_per_shift.end()));
  EXPECT_EQ(q.eps_ssim, *std::max_element(q.ssim_per_shift.begin(), q.ssim_per_shift.end()));
}
