#ifndef RRECON_PREPROCESS_HPP
#define RRECON_PREPROCESS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "rrecon/acquisition.hpp"
#include "rrecon/errors.hpp"
#include "rrecon/model.hpp"

namespace rrecon {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Band pass

/// Frequency indices j < freq_count with b1 <= j / T <= b2 (T in ms, bounds in kHz).
inline std::vector<std::size_t> band_pass(std::size_t freq_count, double period_ms, double b1_khz, double b2_khz) {
  if (!(b1_khz >= 0.0) || !(b1_khz < b2_khz)) throw ConfigError("band pass: 0 <= b1 < b2 is required");
  if (!(period_ms > 0.0)) throw ConfigError("band pass: period must be > 0");
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < freq_count; ++j) {
    const double f = static_cast<double>(j) / period_ms;
    if (b1_khz <= f && f <= b2_khz) out.push_back(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration timeline and drift interpolation

/// Acquisition timeline: empty scan k is followed by the calibration scans of bracket k,
/// Q per bracket (the last bracket may be short), then empty scan k + 1.
struct CalibrationSchedule {
  std::size_t per_bracket = 0;  // Q
  std::vector<double> empty_positions;
  std::vector<double> calibration_positions;
};

inline CalibrationSchedule make_calibration_schedule(std::size_t calibration_scans, std::size_t empty_scans) {
  if (empty_scans < 2) throw ConfigError("calibration schedule: K >= 2 is required");
  const std::size_t brackets = empty_scans - 1;
  CalibrationSchedule s;
  s.per_bracket = (calibration_scans + brackets - 1) / brackets;
  if (s.per_bracket < 2)
    throw ConfigError("calibration schedule: fewer than two calibration scans per empty-scan bracket; lower K");
  const double stride = static_cast<double>(s.per_bracket + 1);
  for (std::size_t k = 0; k < empty_scans; ++k) s.empty_positions.push_back(static_cast<double>(k) * stride);
  for (std::size_t i = 0; i < calibration_scans; ++i)
    s.calibration_positions.push_back(static_cast<double>(i / s.per_bracket) * stride + 1.0 +
                                      static_cast<double>(i % s.per_bracket));
  return s;
}

/// Weight kappa of the earlier empty scan for the q-th of Q calibration scans in a bracket:
/// 1, (Q-2)/(Q-1), ..., 0.
inline double interp_weight(std::size_t q, std::size_t per_bracket) {
  if (per_bracket < 2) throw ConfigError("background interpolation: Q >= 2 is required");
  if (q >= per_bracket) throw ConfigError("background interpolation: position outside bracket");
  return 1.0 - static_cast<double>(q) / static_cast<double>(per_bracket - 1);
}

/// mu^(i) = kappa_i v^(k_i) + (1 - kappa_i) v^(k_i + 1) with k_i = i / Q.
inline ComplexVector interp_background(const EmptyScanSet& scans, std::size_t calibration_index,
                                       std::size_t per_bracket) {
  const double kappa = interp_weight(calibration_index % std::max<std::size_t>(per_bracket, 2), per_bracket);
  const std::size_t k = calibration_index / per_bracket;
  if (k + 1 >= scans.size()) throw ConfigError("background interpolation: calibration index beyond the last bracket");
  const auto& d = scans.scans.data;
  return kappa * d.col(static_cast<Eigen::Index>(k)) + (1.0 - kappa) * d.col(static_cast<Eigen::Index>(k + 1));
}

inline SpectrumSet interp_backgrounds(const EmptyScanSet& scans, std::size_t calibration_scans,
                                      std::size_t per_bracket) {
  SpectrumSet out;
  out.coils = scans.scans.coils;
  out.freq_count = scans.scans.freq_count;
  out.data.resize(static_cast<Eigen::Index>(out.components()), static_cast<Eigen::Index>(calibration_scans));
  for (std::size_t i = 0; i < calibration_scans; ++i)
    out.data.col(static_cast<Eigen::Index>(i)) = interp_background(scans, i, per_bracket);
  return out;
}

inline ComplexVector subtract_background(const ComplexVector& measurement, const ComplexVector& background) {
  if (measurement.size() != background.size()) throw ConfigError("background subtraction: shape mismatch");
  return measurement - background;
}

/// Background-corrected calibration scans divided by the calibration concentration.
inline SystemMatrix calibrate_system_matrix(const SpectrumSet& calibration, const SpectrumSet& backgrounds,
                                            double concentration, const VoxelGrid& grid) {
  if (!calibration.same_shape(backgrounds) || calibration.count() != backgrounds.count())
    throw ConfigError("calibration: scans and interpolated backgrounds differ in shape");
  if (calibration.count() != grid.size()) throw ConfigError("calibration: one scan per voxel is required");
  if (!(concentration > 0.0)) throw ConfigError("calibration: concentration must be > 0");
  SystemMatrix s;
  s.coils = calibration.coils;
  s.freq_count = calibration.freq_count;
  s.grid = grid;
  s.rows = (calibration.data - backgrounds.data) / concentration;
  return s;
}

// ---------------------------------------------------------------------------
// SNR-type frequency selection

/// d_{l,j} for every coil l and every band index j (columns follow `band`).
struct SnrScores {
  std::vector<std::size_t> band;
  Eigen::MatrixXd values;  // coils x band.size()
};

/// Ratio of the mean |calibration - interpolated background| over all calibration scans to the
/// mean |empty scan - background mean| over all empty scans. A zero denominator yields +inf.
inline SnrScores snr_scores(const SpectrumSet& calibration, const SpectrumSet& backgrounds, const EmptyScanSet& empties,
                            const std::vector<std::size_t>& band) {
  if (!calibration.same_shape(backgrounds) || !calibration.same_shape(empties.scans) ||
      calibration.count() != backgrounds.count())
    throw ConfigError("snr scores: spectra differ in shape");
  if (empties.size() < 2) throw ConfigError("snr scores: K >= 2 is required");
  if (calibration.count() == 0) throw ConfigError("snr scores: no calibration scans");
  const ComplexVector mu = background_mean(empties);
  SnrScores out;
  out.band = band;
  out.values.resize(calibration.coils, static_cast<Eigen::Index>(band.size()));
  for (int coil = 0; coil < calibration.coils; ++coil) {
    for (std::size_t b = 0; b < band.size(); ++b) {
      if (band[b] >= calibration.freq_count) throw ConfigError("snr scores: band index out of range");
      const auto c = static_cast<Eigen::Index>(coil * calibration.freq_count + band[b]);
      const double num = (calibration.data.row(c) - backgrounds.data.row(c)).cwiseAbs().mean();
      const double den = (empties.scans.data.row(c).array() - mu[c]).abs().mean();
      out.values(coil, static_cast<Eigen::Index>(b)) = den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

struct FrequencySelection {
  std::vector<std::size_t> band;
  Eigen::MatrixXd scores;  // coils x band.size()
  double tau = 0.0;
  std::vector<std::vector<std::size_t>> selected;  // per coil, ascending

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& s : selected) n += s.size();
    return n;
  }
};

/// J_l = { j in band : d_{l,j} >= tau }.
inline FrequencySelection select_frequencies(const SnrScores& scores, double tau) {
  if (!(tau >= 0.0)) throw ConfigError("frequency selection: tau must be >= 0");
  FrequencySelection sel;
  sel.band = scores.band;
  sel.scores = scores.values;
  sel.tau = tau;
  sel.selected.resize(static_cast<std::size_t>(scores.values.rows()));
  for (Eigen::Index coil = 0; coil < scores.values.rows(); ++coil)
    for (std::size_t b = 0; b < scores.band.size(); ++b)
      if (scores.values(coil, static_cast<Eigen::Index>(b)) >= tau)
        sel.selected[static_cast<std::size_t>(coil)].push_back(scores.band[b]);
  return sel;
}

// ---------------------------------------------------------------------------
// Reduced real system

struct RowKey {
  int coil = 0;
  std::size_t freq = 0;
  bool imag = false;

  bool operator==(const RowKey&) const = default;
};

/// Real rows in assembly order: coil-major, ascending frequency, real row then imaginary row.
inline std::vector<RowKey> row_keys(const FrequencySelection& sel) {
  std::vector<RowKey> keys;
  for (std::size_t coil = 0; coil < sel.selected.size(); ++coil)
    for (std::size_t j : sel.selected[coil]) {
      keys.push_back({static_cast<int>(coil), j, false});
      keys.push_back({static_cast<int>(coil), j, true});
    }
  return keys;
}

struct WhiteningWeights {
  Eigen::VectorXd diagonal;
};

/// 1 / max(std, delta * max std) per retained real/imaginary row, from the empty-scan spread.
inline WhiteningWeights whitening_weights(const EmptyScanSet& empties, const FrequencySelection& sel,
                                          double delta = 1e-8) {
  const auto [vr, vi] = background_variance(empties);
  const auto keys = row_keys(sel);
  Eigen::VectorXd stds(static_cast<Eigen::Index>(keys.size()));
  for (std::size_t r = 0; r < keys.size(); ++r) {
    const auto c = static_cast<Eigen::Index>(static_cast<std::size_t>(keys[r].coil) * empties.scans.freq_count + keys[r].freq);
    stds[static_cast<Eigen::Index>(r)] = std::sqrt(keys[r].imag ? vi[c] : vr[c]);
  }
  const double max_std = stds.size() > 0 ? stds.maxCoeff() : 0.0;
  if (!(max_std > 0.0)) throw NumericalError("whitening: background variance is zero on every retained component");
  const double floor = delta * max_std;
  WhiteningWeights w;
  w.diagonal = stds.unaryExpr([floor](double s) { return 1.0 / std::max(s, floor); });
  return w;
}

/// Largest singular value of `a` by power iteration on a^T a, relative tolerance on successive estimates.
template <typename Derived>
double spectral_norm(const Eigen::MatrixBase<Derived>& a, double tol = 1e-10, int max_iterations = 5000) {
  if (a.rows() == 0 || a.cols() == 0) throw NumericalError("spectral norm: empty matrix");
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  Eigen::VectorXd v(a.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = unif(rng);
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::VectorXd av = a * v;
    const double next = av.norm();
    if (!std::isfinite(next)) throw NumericalError("spectral norm: non-finite matrix entries");
    Eigen::VectorXd w = a.transpose() * av;
    const double wn = w.norm();
    if (wn == 0.0) throw NumericalError("spectral norm: zero matrix");
    v = w / wn;
    if (it > 0 && std::abs(next - sigma) <= tol * next) return std::sqrt(wn);
    sigma = next;
  }
  throw NumericalError("spectral norm: power iteration did not converge");
}

/// Real, optionally whitened, unit-norm reduced system.
struct ReducedSystem {
  RowMatrix a;
  Eigen::VectorXd y;
  std::vector<RowKey> rows;
  double scale = 1.0;
  bool whitened = false;

  Eigen::Index n() const { return a.rows(); }
  Eigen::Index m() const { return a.cols(); }
};

struct PowerIterationOptions {
  double tol = 1e-10;
  int max_iterations = 5000;
};

/// Splits the selected complex rows of the calibrated system matrix and the corrected
/// measurement into real/imaginary rows, applies optional whitening to both, then
/// divides both by the spectral norm of the (whitened) matrix.
inline ReducedSystem assemble_reduced_system(const SystemMatrix& s, const ComplexVector& y,
                                             const FrequencySelection& sel,
                                             const std::optional<WhiteningWeights>& weights = std::nullopt,
                                             PowerIterationOptions power = {}) {
  if (y.size() != s.rows.rows()) throw ConfigError("reduced system: measurement length differs from system matrix");
  if (sel.selected.size() != static_cast<std::size_t>(s.coils))
    throw ConfigError("reduced system: selection coil count differs from system matrix");
  ReducedSystem r;
  r.rows = row_keys(sel);
  if (r.rows.empty()) throw NumericalError("reduced system: frequency selection is empty");
  const auto n = static_cast<Eigen::Index>(r.rows.size());
  if (weights && weights->diagonal.size() != n) throw ConfigError("reduced system: whitening weight count differs from rows");

  r.a.resize(n, s.rows.cols());
  r.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowKey& key = r.rows[static_cast<std::size_t>(i)];
    if (key.freq >= s.freq_count) throw ConfigError("reduced system: selected frequency out of range");
    const auto src = static_cast<Eigen::Index>(s.row(key.coil, key.freq));
    if (key.imag) {
      r.a.row(i) = s.rows.row(src).imag();
      r.y[i] = y[src].imag();
    } else {
      r.a.row(i) = s.rows.row(src).real();
      r.y[i] = y[src].real();
    }
  }
  if (weights) {
    r.a = weights->diagonal.asDiagonal() * r.a;
    r.y = r.y.cwiseProduct(weights->diagonal);
    r.whitened = true;
  }
  r.scale = spectral_norm(r.a, power.tol, power.max_iterations);
  r.a /= r.scale;
  r.y /= r.scale;
  return r;
}

}  // namespace rrecon

#endif  // RRECON_PREPROCESS_HPP
