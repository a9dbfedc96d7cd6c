#ifndef RRECON_ACQUISITION_HPP
#define RRECON_ACQUISITION_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "rrecon/errors.hpp"
#include "rrecon/model.hpp"

namespace rrecon {

/// Column-wise collection of spectra; component index = coil * freq_count + j.
struct SpectrumSet {
  int coils = 0;
  std::size_t freq_count = 0;
  ComplexMatrix data;  // components x count

  std::size_t components() const { return static_cast<std::size_t>(coils) * freq_count; }
  std::size_t count() const { return static_cast<std::size_t>(data.cols()); }
  bool same_shape(const SpectrumSet& o) const { return coils == o.coils && freq_count == o.freq_count; }
};

/// Background signal law: a harmonic-peaked mean, independent Gaussian noise on the
/// real and imaginary parts, a set of variance-inflated outlier components, and a
/// linear drift in the acquisition timeline.
struct BackgroundModel {
  int coils = 0;
  std::size_t freq_count = 0;
  ComplexVector mean;
  Eigen::VectorXd base_variance;
  std::vector<std::size_t> outliers;  // sorted component indices
  double outlier_scale = 1.0;
  ComplexVector drift;                // per timeline step

  std::size_t components() const { return static_cast<std::size_t>(coils) * freq_count; }

  bool is_outlier(std::size_t c) const { return std::binary_search(outliers.begin(), outliers.end(), c); }

  double noise_std(std::size_t c) const {
    const double s = std::sqrt(base_variance[static_cast<Eigen::Index>(c)]);
    return is_outlier(c) ? s * outlier_scale : s;
  }

  void validate() const {
    const auto n = static_cast<Eigen::Index>(components());
    if (mean.size() != n || base_variance.size() != n || drift.size() != n)
      throw ConfigError("background model: component arrays have inconsistent sizes");
    if ((base_variance.array() < 0.0).any()) throw ConfigError("background model: variance must be >= 0");
    if (!(outlier_scale >= 1.0)) throw ConfigError("background model: outlier scale must be >= 1");
    for (std::size_t c : outliers)
      if (c >= components()) throw ConfigError("background model: outlier index out of range");
  }
};

/// Knobs of the synthetic background profile.
struct BackgroundParams {
  double peak_amplitude = 20.0;  // mean peak at the fundamental
  double peak_decay = 0.5;       // geometric decay per odd harmonic
  double base_std = 1.0;
  double outlier_fraction = 0.03;
  double outlier_scale = 100.0;
  double drift = 0.0;            // |drift| per timeline step, same phase everywhere
  std::uint64_t seed = 7;
};

namespace detail {

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

inline void add_noise(const BackgroundModel& bg, std::mt19937_64& rng, Eigen::Ref<ComplexVector> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t c = 0; c < bg.components(); ++c) {
    const double s = bg.noise_std(c);
    const double re = normal(rng);
    const double im = normal(rng);
    out[static_cast<Eigen::Index>(c)] += std::complex<double>(s * re, s * im);
  }
}

}  // namespace detail

/// Synthetic background: odd-harmonic mean peaks of each coil's drive frequency and
/// outlier components drawn uniformly from `outlier_candidates` (frequency indices, all coils).
inline BackgroundModel make_background(const ScannerConfig& scanner, const BackgroundParams& params,
                                       const std::vector<std::size_t>& outlier_candidates) {
  scanner.validate();
  BackgroundModel bg;
  bg.coils = scanner.coils();
  bg.freq_count = scanner.freq_count();
  const auto n = static_cast<Eigen::Index>(bg.components());
  bg.mean = ComplexVector::Zero(n);
  bg.base_variance = Eigen::VectorXd::Constant(n, params.base_std * params.base_std);
  bg.outlier_scale = params.outlier_scale;
  const std::complex<double> phase = std::polar(1.0, std::numbers::pi / 4.0);
  bg.drift = ComplexVector::Constant(n, params.drift * phase);

  for (int coil = 0; coil < bg.coils; ++coil) {
    const auto fundamental = static_cast<std::size_t>(std::llround(scanner.drive_frequency_khz[coil] * scanner.period_ms));
    double amp = params.peak_amplitude;
    for (std::size_t h = 1; h * fundamental < bg.freq_count; h += 2) {
      bg.mean[static_cast<Eigen::Index>(coil * bg.freq_count + h * fundamental)] = amp * phase;
      amp *= params.peak_decay;
    }
  }

  std::vector<std::size_t> pool;
  for (int coil = 0; coil < bg.coils; ++coil)
    for (std::size_t j : outlier_candidates)
      if (j < bg.freq_count) pool.push_back(coil * bg.freq_count + j);
  const auto count = static_cast<std::size_t>(std::llround(params.outlier_fraction * static_cast<double>(pool.size())));
  auto rng = detail::make_engine(params.seed, 0x6f75746c);
  std::shuffle(pool.begin(), pool.end(), rng);
  bg.outliers.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(count, pool.size())));
  std::sort(bg.outliers.begin(), bg.outliers.end());
  bg.validate();
  return bg;
}

/// Background-only spectra v_0^(k) with the timeline positions they were taken at.
struct EmptyScanSet {
  SpectrumSet scans;
  std::vector<double> schedule;

  std::size_t size() const { return scans.count(); }
};

struct Measurement {
  ComplexVector spectrum;
  int repetitions = 1;
  std::uint64_t seed = 0;
};

/// K empty scans; scan k = mean + drift * schedule[k] + noise. The schedule defaults to 0..K-1.
inline EmptyScanSet draw_empty_scans(const BackgroundModel& bg, std::size_t k_scans, std::uint64_t seed,
                                     std::vector<double> schedule = {}) {
  bg.validate();
  if (k_scans < 2) throw ConfigError("empty scans: K >= 2 is required (variance and SNR denominators)");
  if (schedule.empty())
    for (std::size_t k = 0; k < k_scans; ++k) schedule.push_back(static_cast<double>(k));
  if (schedule.size() != k_scans) throw ConfigError("empty scans: schedule length differs from K");

  EmptyScanSet out;
  out.scans.coils = bg.coils;
  out.scans.freq_count = bg.freq_count;
  out.scans.data.resize(static_cast<Eigen::Index>(bg.components()), static_cast<Eigen::Index>(k_scans));
  auto rng = detail::make_engine(seed, 0x656d7074);
  for (std::size_t k = 0; k < k_scans; ++k) {
    auto col = out.scans.data.col(static_cast<Eigen::Index>(k));
    col = bg.mean + bg.drift * schedule[k];
    detail::add_noise(bg, rng, col);
  }
  out.schedule = std::move(schedule);
  return out;
}

/// Phantom measurement S x + mean + drift * position + noise.
inline Measurement draw_phantom_measurement(const SystemMatrix& s, const Phantom& phantom, const BackgroundModel& bg,
                                            std::uint64_t seed, double position = 0.0) {
  bg.validate();
  if (!(s.grid == phantom.grid)) throw ConfigError("phantom measurement: phantom grid differs from system matrix grid");
  if (s.coils != bg.coils || s.freq_count != bg.freq_count)
    throw ConfigError("phantom measurement: background shape differs from system matrix");
  Measurement m;
  m.seed = seed;
  m.spectrum = s.apply(phantom.concentration) + bg.mean + bg.drift * position;
  auto rng = detail::make_engine(seed, 0x7068616e);
  detail::add_noise(bg, rng, m.spectrum);
  return m;
}

/// One calibration scan per voxel: concentration * S e_v + mean + drift * positions[v] + noise.
inline SpectrumSet draw_calibration_scans(const SystemMatrix& s, const BackgroundModel& bg, double concentration,
                                          const std::vector<double>& positions, std::uint64_t seed) {
  bg.validate();
  if (s.coils != bg.coils || s.freq_count != bg.freq_count)
    throw ConfigError("calibration scans: background shape differs from system matrix");
  if (positions.size() != static_cast<std::size_t>(s.rows.cols()))
    throw ConfigError("calibration scans: one timeline position per voxel is required");
  SpectrumSet out;
  out.coils = s.coils;
  out.freq_count = s.freq_count;
  out.data.resize(s.rows.rows(), s.rows.cols());
  auto rng = detail::make_engine(seed, 0x63616c69);
  for (Eigen::Index v = 0; v < s.rows.cols(); ++v) {
    auto col = out.data.col(v);
    col = concentration * s.rows.col(v) + bg.mean + bg.drift * positions[static_cast<std::size_t>(v)];
    detail::add_noise(bg, rng, col);
  }
  return out;
}

/// Componentwise mean of the empty scans.
inline ComplexVector background_mean(const EmptyScanSet& scans) {
  if (scans.size() == 0) throw ConfigError("background mean: empty scan set");
  return scans.scans.data.rowwise().mean();
}

/// Unbiased sample variance of the real and imaginary parts, per component.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> background_variance(const EmptyScanSet& scans) {
  const std::size_t k = scans.size();
  if (k < 2) throw ConfigError("background variance: K >= 2 is required");
  const ComplexVector mu = background_mean(scans);
  const auto n = scans.scans.data.rows();
  Eigen::VectorXd vr = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd vi = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(k); ++j) {
    const ComplexVector d = scans.scans.data.col(j) - mu;
    vr.array() += d.real().array().square();
    vi.array() += d.imag().array().square();
  }
  const double denom = static_cast<double>(k - 1);
  return {vr / denom, vi / denom};
}

}  // namespace rrecon

#endif  // RRECON_ACQUISITION_HPP
