#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "rrecon/acquisition.hpp"
#include "rrecon/preprocess.hpp"

using namespace rrecon;

namespace {

ScannerConfig tiny_scanner() {
  ScannerConfig c;
  c.dims = 2;
  c.samples_per_period = 128;
  return c;
}

BackgroundModel quiet_background(const ScannerConfig& sc) {
  BackgroundParams p;
  p.base_std = 0.0;
  p.outlier_fraction = 0.0;
  return make_background(sc, p, {});
}

EmptyScanSet from_columns(std::vector<std::vector<std::complex<double>>> cols) {
  EmptyScanSet s;
  s.scans.coils = 1;
  s.scans.freq_count = cols.front().size();
  s.scans.data.resize(static_cast<Eigen::Index>(cols.front().size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k)
    for (std::size_t c = 0; c < cols[k].size(); ++c)
      s.scans.data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) = cols[k][c];
  for (std::size_t k = 0; k < cols.size(); ++k) s.schedule.push_back(static_cast<double>(k));
  return s;
}

}  // namespace

TEST(Background, HarmonicPeaksWithGeometricDecay) {
  const ScannerConfig sc = tiny_scanner();
  const BackgroundModel bg = quiet_background(sc);
  const std::size_t f = 16;  // 16 kHz drive, 1 ms period
  EXPECT_NEAR(std::abs(bg.mean[static_cast<Eigen::Index>(f)]), 20.0, 1e-12);
  EXPECT_NEAR(std::abs(bg.mean[static_cast<Eigen::Index>(3 * f)]), 10.0, 1e-12);
  EXPECT_NEAR(std::abs(bg.mean[static_cast<Eigen::Index>(2 * f)]), 0.0, 1e-12);
  const std::size_t g = 17;
  EXPECT_NEAR(std::abs(bg.mean[static_cast<Eigen::Index>(bg.freq_count + g)]), 20.0, 1e-12);
}

TEST(Background, OutliersDrawnFromCandidates) {
  const ScannerConfig sc = tiny_scanner();
  BackgroundParams p;
  p.outlier_fraction = 0.1;
  std::vector<std::size_t> cand(40);
  std::iota(cand.begin(), cand.end(), 10);
  const BackgroundModel bg = make_background(sc, p, cand);
  EXPECT_EQ(bg.outliers.size(), 8u);
  EXPECT_TRUE(std::is_sorted(bg.outliers.begin(), bg.outliers.end()));
  for (std::size_t c : bg.outliers) {
    const std::size_t j = c % bg.freq_count;
    EXPECT_GE(j, 10u);
    EXPECT_LT(j, 50u);
    EXPECT_DOUBLE_EQ(bg.noise_std(c), p.base_std * p.outlier_scale);
  }
}

TEST(EmptyScans, ZeroNoiseEqualsMean) {
  const BackgroundModel bg = quiet_background(tiny_scanner());
  const EmptyScanSet s = draw_empty_scans(bg, 2, 1);
  EXPECT_EQ(s.scans.data.col(0), bg.mean);
  EXPECT_EQ(s.scans.data.col(1), bg.mean);
}

TEST(EmptyScans, SameSeedSameScans) {
  const ScannerConfig sc = tiny_scanner();
  const BackgroundModel bg = make_background(sc, BackgroundParams{}, band_pass(sc.freq_count(), 1.0, 10, 60));
  EXPECT_EQ(draw_empty_scans(bg, 5, 42).scans.data, draw_empty_scans(bg, 5, 42).scans.data);
  EXPECT_NE(draw_empty_scans(bg, 5, 42).scans.data, draw_empty_scans(bg, 5, 43).scans.data);
}

TEST(EmptyScans, RequiresTwoScans) {
  const BackgroundModel bg = quiet_background(tiny_scanner());
  try {
    draw_empty_scans(bg, 1, 0);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("K >= 2"), std::string::npos);
  }
}

TEST(EmptyScans, DriftFollowsSchedule) {
  const ScannerConfig sc = tiny_scanner();
  BackgroundParams p;
  p.base_std = 0.0;
  p.outlier_fraction = 0.0;
  p.drift = 0.5;
  const BackgroundModel bg = make_background(sc, p, {});
  const EmptyScanSet s = draw_empty_scans(bg, 3, 0, {0.0, 4.0, 8.0});
  EXPECT_LT((s.scans.data.col(2) - s.scans.data.col(0) - 8.0 * bg.drift).norm(), 1e-12);
}

TEST(EmptyScans, OutlierVarianceMatchesScale) {
  const ScannerConfig sc = tiny_scanner();
  BackgroundParams p;
  p.outlier_fraction = 0.05;
  p.outlier_scale = 100.0;
  const BackgroundModel bg = make_background(sc, p, band_pass(sc.freq_count(), 1.0, 5, 60));
  const EmptyScanSet s = draw_empty_scans(bg, 1000, 9);
  const auto [vr, vi] = background_variance(s);
  ASSERT_FALSE(bg.outliers.empty());
  const double expected = std::pow(p.outlier_scale * p.base_std, 2);
  for (std::size_t c : bg.outliers) {
    EXPECT_NEAR(vr[static_cast<Eigen::Index>(c)], expected, 0.15 * expected);
    EXPECT_NEAR(vi[static_cast<Eigen::Index>(c)], expected, 0.15 * expected);
  }
  std::vector<double> sorted(vr.data(), vr.data() + vr.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  const double median = sorted[sorted.size() / 2];
  for (std::size_t c : bg.outliers) EXPECT_GE(vr[static_cast<Eigen::Index>(c)], 10.0 * median);
}

TEST(EmptyScans, OutliersRecoverableFromVariance) {
  const ScannerConfig sc = tiny_scanner();
  BackgroundParams p;
  p.outlier_fraction = 0.05;
  p.outlier_scale = 50.0;
  const BackgroundModel bg = make_background(sc, p, band_pass(sc.freq_count(), 1.0, 5, 60));
  const auto [vr, vi] = background_variance(draw_empty_scans(bg, 1000, 21));
  const Eigen::VectorXd total = vr + vi;
  std::vector<std::size_t> order(static_cast<std::size_t>(total.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return total[static_cast<Eigen::Index>(a)] > total[static_cast<Eigen::Index>(b)]; });
  const std::set<std::size_t> top(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(bg.outliers.size()));
  std::size_t hits = 0;
  for (std::size_t c : bg.outliers) hits += top.count(c);
  EXPECT_GE(static_cast<double>(hits), 0.9 * static_cast<double>(bg.outliers.size()));
}

TEST(Measurement, ZeroPhantomQuietBackgroundIsMean) {
  const ScannerConfig sc = tiny_scanner();
  const VoxelGrid g = centered_grid({3, 3, 1}, {1, 1, 1});
  const SystemMatrix s = simulate_system_matrix(sc, g);
  const BackgroundModel bg = quiet_background(sc);
  const Measurement m = draw_phantom_measurement(s, custom_phantom(g, std::vector<double>(9, 0.0)), bg, 5);
  EXPECT_EQ(m.spectrum, bg.mean);
}

TEST(Measurement, ZeroBackgroundIsForwardModel) {
  const ScannerConfig sc = tiny_scanner();
  const VoxelGrid g = centered_grid({3, 3, 1}, {1, 1, 1});
  const SystemMatrix s = simulate_system_matrix(sc, g);
  BackgroundModel bg = quiet_background(sc);
  bg.mean.setZero();
  const Phantom ph = make_phantom(PhantomKind::Delta, g, 7.0);
  EXPECT_EQ(draw_phantom_measurement(s, ph, bg, 5).spectrum, s.apply(ph.concentration));
}

TEST(Measurement, UnbiasedOverSeeds) {
  const ScannerConfig sc = tiny_scanner();
  const VoxelGrid g = centered_grid({3, 3, 1}, {1, 1, 1});
  const SystemMatrix s = simulate_system_matrix(sc, g);
  BackgroundParams p;
  p.outlier_fraction = 0.0;
  const BackgroundModel bg = make_background(sc, p, {});
  const Phantom ph = make_phantom(PhantomKind::Delta, g, 7.0);
  const ComplexVector expected = s.apply(ph.concentration) + bg.mean;
  ComplexVector sum = ComplexVector::Zero(expected.size());
  const int seeds = 2000;
  for (int k = 0; k < seeds; ++k) sum += draw_phantom_measurement(s, ph, bg, static_cast<std::uint64_t>(k)).spectrum;
  sum /= static_cast<double>(seeds);
  const double bound = 3.0 * p.base_std / std::sqrt(static_cast<double>(seeds));
  std::size_t violations = 0;
  for (Eigen::Index c = 0; c < sum.size(); ++c)
    violations += (std::abs(sum[c].real() - expected[c].real()) > bound) + (std::abs(sum[c].imag() - expected[c].imag()) > bound);
  // A 3-sigma bound is exceeded by about 0.27% of components under the null.
  EXPECT_LE(static_cast<double>(violations), 0.01 * 2.0 * static_cast<double>(sum.size()));
}

TEST(Measurement, GridMismatchRejected) {
  const ScannerConfig sc = tiny_scanner();
  const SystemMatrix s = simulate_system_matrix(sc, centered_grid({3, 3, 1}, {1, 1, 1}));
  const Phantom ph = make_phantom(PhantomKind::Delta, centered_grid({5, 5, 1}, {1, 1, 1}), 1.0);
  EXPECT_THROW(draw_phantom_measurement(s, ph, quiet_background(sc), 0), ConfigError);
}

TEST(Estimators, MeanAndVarianceExamples) {
  const EmptyScanSet two = from_columns({{{1.0, 0.0}}, {{3.0, 0.0}}});
  EXPECT_EQ(background_mean(two)[0], std::complex<double>(2.0, 0.0));
  const EmptyScanSet spread = from_columns({{{0.0, 0.0}}, {{2.0, 0.0}}});
  EXPECT_DOUBLE_EQ(background_variance(spread).first[0], 2.0);
  EXPECT_DOUBLE_EQ(background_variance(spread).second[0], 0.0);
  const EmptyScanSet same = from_columns({{{1.5, -2.0}}, {{1.5, -2.0}}, {{1.5, -2.0}}});
  EXPECT_EQ(background_mean(same)[0], std::complex<double>(1.5, -2.0));
  EXPECT_EQ(background_variance(same).first[0], 0.0);
  EXPECT_THROW(background_variance(from_columns({{{1.0, 0.0}}})), ConfigError);
}

TEST(Estimators, MatchTwoPassBruteForce) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 7), comps = 5;
    std::vector<std::vector<std::complex<double>>> cols(k, std::vector<std::complex<double>>(comps));
    for (auto& c : cols)
      for (auto& v : c) v = {n(rng) + 10.0, n(rng)};
    const EmptyScanSet s = from_columns(cols);
    const ComplexVector mu = background_mean(s);
    const auto [vr, vi] = background_variance(s);
    for (std::size_t c = 0; c < comps; ++c) {
      double mr = 0, mi = 0;
      for (auto& col : cols) mr += col[c].real(), mi += col[c].imag();
      mr /= static_cast<double>(k), mi /= static_cast<double>(k);
      double sr = 0, si = 0;
      for (auto& col : cols) sr += std::pow(col[c].real() - mr, 2), si += std::pow(col[c].imag() - mi, 2);
      sr /= static_cast<double>(k - 1), si /= static_cast<double>(k - 1);
      const auto ci = static_cast<Eigen::Index>(c);
      EXPECT_NEAR(mu[ci].real(), mr, 1e-12 * std::abs(mr));
      EXPECT_NEAR(mu[ci].imag(), mi, 1e-12 * (1 + std::abs(mi)));
      EXPECT_NEAR(vr[ci], sr, 1e-12 * sr);
      EXPECT_NEAR(vi[ci], si, 1e-12 * si);
    }
  }
}

TEST(Estimators, MeanConvergesToModelMean) {
  const ScannerConfig sc = tiny_scanner();
  BackgroundParams p;
  p.outlier_fraction = 0.0;
  const BackgroundModel bg = make_background(sc, p, {});
  const ComplexVector mu = background_mean(draw_empty_scans(bg, 1000, 4));
  const double bound = 4.0 * p.base_std / std::sqrt(1000.0);
  for (Eigen::Index c = 0; c < mu.size(); ++c) {
    EXPECT_LE(std::abs(mu[c].real() - bg.mean[c].real()), bound);
    EXPECT_LE(std::abs(mu[c].imag() - bg.mean[c].imag()), bound);
  }
}
