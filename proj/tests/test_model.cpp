#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <numbers>
#include <random>

#include "rrecon/model.hpp"

using namespace rrecon;

namespace {

ScannerConfig small_scanner(int dims) {
  ScannerConfig c;
  c.dims = dims;
  c.samples_per_period = 256;
  c.drive_frequency_khz = {16.0, 17.0, 0.0};
  return c;
}

// Plain O(P^2) DFT of the time derivative computed spectrally, independent of FFTW.
std::complex<double> reference_coefficient(const ScannerConfig& cfg, const Vec3& r, int coil, std::size_t j) {
  const std::size_t p = cfg.samples_per_period;
  const double beta = cfg.beta_per_mt();
  std::complex<double> acc = 0.0;
  for (std::size_t n = 0; n < p; ++n) {
    const double t = static_cast<double>(n) / static_cast<double>(p) * cfg.period_ms;
    double h[3] = {0, 0, 0}, h2 = 0;
    for (int a = 0; a < cfg.dims; ++a) {
      h[a] = cfg.gradient_tpm[a] * r[a] - cfg.drive_amplitude_mt[a] * std::sin(2 * std::numbers::pi * cfg.drive_frequency_khz[a] * t);
      h2 += h[a] * h[a];
    }
    const double hn = std::sqrt(h2);
    const double m = hn > 0 ? langevin(beta * hn) * h[coil] / hn : 0.0;
    acc += m * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(j * n) / static_cast<double>(p));
  }
  const double omega = 2 * std::numbers::pi * static_cast<double>(j) / cfg.period_ms;
  return std::complex<double>(0, omega) * acc / static_cast<double>(p);
}

}  // namespace

TEST(Langevin, Values) {
  EXPECT_EQ(langevin(0.0), 0.0);
  EXPECT_GT(langevin(50.0), 0.97);
  EXPECT_NEAR(langevin(1.0), 1.0 / std::tanh(1.0) - 1.0, 1e-15);
  EXPECT_NEAR(langevin(1.0), 0.313035, 1e-6);
}

TEST(Langevin, OddBoundedMonotone) {
  double prev = -2.0;
  for (int i = 0; i < 1000; ++i) {
    const double xi = -30.0 + 60.0 * i / 999.0;
    const double v = langevin(xi);
    EXPECT_LT(std::abs(v), 1.0);
    EXPECT_NEAR(langevin(-xi), -v, 1e-15);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(Langevin, SeriesBranchIsContinuous) {
  const double below = langevin(0.99e-4), above = langevin(1.01e-4);
  EXPECT_NEAR(below, 0.99e-4 / 3.0, 1e-12);
  EXPECT_NEAR(above, 1.01e-4 / 3.0, 1e-11);
}

TEST(Grid, IndexingAndCenters) {
  const VoxelGrid g = centered_grid({3, 2, 1}, {1.0, 2.0, 1.0});
  EXPECT_EQ(g.size(), 6u);
  EXPECT_EQ(g.index(2, 1, 0), 5u);
  EXPECT_EQ(g.coords(5), (std::array<std::size_t, 3>{2, 1, 0}));
  EXPECT_EQ(g.center(0), (Vec3{-1.0, -1.0, 0.0}));
  EXPECT_EQ(g.center(5), (Vec3{1.0, 1.0, 0.0}));
  EXPECT_THROW(centered_grid({0, 1, 1}, {1, 1, 1}), ConfigError);
  EXPECT_THROW(centered_grid({1, 1, 1}, {1, 0, 1}), ConfigError);
}

TEST(Phantom, DeltaSetsCenterVoxel) {
  const VoxelGrid g = centered_grid({5, 5, 1}, {1, 1, 1});
  const Phantom p = make_phantom(PhantomKind::Delta, g, 50.0);
  for (std::size_t v = 0; v < g.size(); ++v) EXPECT_EQ(p.concentration[v], v == g.index(2, 2, 0) ? 50.0 : 0.0);
  EXPECT_TRUE(has_membership_test(p.support));
}

TEST(Phantom, ConeFullAndHalfCoverage) {
  const VoxelGrid g = centered_grid({5, 5, 1}, {1, 1, 1});
  Cone c;
  c.tip = {-10.0, 0.0, 0.0};
  c.axis = {1.0, 0.0, 0.0};
  c.tip_radius = 0.6;
  c.half_angle = 0.0;
  c.height = 10.0;  // ends exactly at x = 0, halfway through the center voxel
  const Phantom p = make_phantom(PhantomKind::ShapeCone, g, 50.0, Support{c});
  EXPECT_EQ(p.concentration[g.index(1, 2, 0)], 50.0);
  EXPECT_NEAR(p.concentration[g.index(2, 2, 0)], 25.0, 50.0 / 64.0);
  EXPECT_EQ(p.concentration[g.index(3, 2, 0)], 0.0);
}

TEST(Phantom, DefaultShapesAreNonnegativeAndInside) {
  const VoxelGrid g = centered_grid({20, 20, 1}, {0.5, 0.5, 0.5});
  for (PhantomKind k : {PhantomKind::ShapeCone, PhantomKind::ResolutionTubes}) {
    const Phantom p = make_phantom(k, g, 50.0);
    double sum = 0.0;
    for (double v : p.concentration) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 50.0);
      sum += v;
    }
    EXPECT_GT(sum, 0.0);
    EXPECT_TRUE(has_membership_test(p.support));
  }
}

TEST(Phantom, Errors) {
  const VoxelGrid g = centered_grid({4, 4, 1}, {1, 1, 1});
  EXPECT_THROW(make_phantom(PhantomKind::Custom, g, 1.0), ConfigError);
  EXPECT_THROW(make_phantom(PhantomKind::ShapeCone, g, 0.0), ConfigError);
  EXPECT_THROW(make_phantom(PhantomKind::ShapeCone, g, 1.0, Support{Box{{100, 100, 100}, {101, 101, 101}}}), ConfigError);
  EXPECT_THROW(custom_phantom(g, std::vector<double>(3, 1.0)), ConfigError);
  EXPECT_THROW(custom_phantom(g, std::vector<double>(16, -1.0)), ConfigError);
  EXPECT_EQ(parse_phantom_kind("resolution-tubes"), PhantomKind::ResolutionTubes);
  EXPECT_THROW(parse_phantom_kind("sphere"), ConfigError);
}

TEST(ScannerConfig, Validation) {
  ScannerConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.coils(), 2);
  EXPECT_EQ(c.freq_count(), 1025u);
  ScannerConfig bad = c;
  bad.samples_per_period = 1000;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.drive_frequency_khz[0] = 16.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.dims = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(SystemMatrix, MatchesDirectDft) {
  const ScannerConfig cfg = small_scanner(2);
  const VoxelGrid g = centered_grid({3, 3, 1}, {1.0, 1.0, 1.0});
  const SystemMatrix s = simulate_system_matrix(cfg, g);
  ASSERT_EQ(s.rows.rows(), static_cast<Eigen::Index>(2 * cfg.freq_count()));
  for (std::size_t v : {0u, 4u, 7u})
    for (int coil = 0; coil < 2; ++coil)
      for (std::size_t j : {1u, 16u, 17u, 48u, 49u, 100u}) {
        const auto ref = reference_coefficient(cfg, g.center(v), coil, j);
        const auto got = s.rows(static_cast<Eigen::Index>(s.row(coil, j)), static_cast<Eigen::Index>(v));
        EXPECT_NEAR(std::abs(got - ref), 0.0, 1e-9 * (1.0 + std::abs(ref))) << "v=" << v << " coil=" << coil << " j=" << j;
      }
}

TEST(SystemMatrix, ZeroDriveGivesZeroRows) {
  ScannerConfig cfg = small_scanner(1);
  cfg.drive_amplitude_mt = {0.0, 0.0, 0.0};
  const VoxelGrid g = centered_grid({1, 1, 1}, {1, 1, 1});
  const SystemMatrix s = simulate_system_matrix(cfg, g);
  EXPECT_EQ(s.rows.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SystemMatrix, OddHarmonicsDominateForCenteredDelta) {
  const ScannerConfig cfg = small_scanner(1);
  const VoxelGrid g = centered_grid({1, 1, 1}, {1, 1, 1});
  const SystemMatrix s = simulate_system_matrix(cfg, g);
  const std::size_t f0 = 16;
  double odd = 0.0, even = 0.0;
  for (std::size_t h = 1; h * f0 < cfg.freq_count(); ++h) {
    const double e = std::norm(s.rows(static_cast<Eigen::Index>(h * f0), 0));
    (h % 2 ? odd : even) += e;
  }
  EXPECT_GT(odd, 10.0 * even);
}

TEST(SystemMatrix, LinearInConcentration) {
  const ScannerConfig cfg = small_scanner(2);
  const VoxelGrid g = centered_grid({4, 4, 1}, {1.0, 1.0, 1.0});
  const SystemMatrix s = simulate_system_matrix(cfg, g);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<double> x1(g.size()), x2(g.size()), mix(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) x1[i] = u(rng), x2[i] = u(rng);
  const double a = 1.7, b = -0.3;
  for (std::size_t i = 0; i < g.size(); ++i) mix[i] = a * x1[i] + b * x2[i];
  const ComplexVector lhs = s.apply(mix);
  const ComplexVector rhs = a * s.apply(x1) + b * s.apply(x2);
  EXPECT_LE((lhs - rhs).norm(), 1e-12 * rhs.norm());
  std::vector<double> twice(x1);
  for (double& v : twice) v *= 2.0;
  EXPECT_EQ(s.apply(twice), (2.0 * s.apply(x1)).eval());
}

TEST(SystemMatrix, Deterministic) {
  const ScannerConfig cfg = small_scanner(2);
  const VoxelGrid g = centered_grid({3, 3, 1}, {1.0, 1.0, 1.0});
  const SystemMatrix a = simulate_system_matrix(cfg, g);
  const SystemMatrix b = simulate_system_matrix(cfg, g);
  EXPECT_EQ(std::memcmp(a.rows.data(), b.rows.data(), sizeof(std::complex<double>) * a.rows.size()), 0);
  EXPECT_TRUE(a.rows.allFinite());
}

TEST(SystemMatrix, Errors) {
  ScannerConfig cfg = small_scanner(2);
  const VoxelGrid g = centered_grid({3, 3, 1}, {1.0, 1.0, 1.0});
  ScannerConfig zero = cfg;
  zero.gradient_tpm[1] = 0.0;
  EXPECT_THROW(simulate_system_matrix(zero, g), ConfigError);
  EXPECT_THROW(simulate_system_matrix(cfg, centered_grid({3, 3, 2}, {1, 1, 1})), ConfigError);
  EXPECT_THROW(simulate_system_matrix(cfg, centered_grid({40, 3, 1}, {1, 1, 1})), ConfigError);
}
