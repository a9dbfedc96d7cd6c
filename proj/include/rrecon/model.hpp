#ifndef RRECON_MODEL_HPP
#define RRECON_MODEL_HPP

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rrecon/errors.hpp"
#include "rrecon/grid.hpp"
#include "rrecon/support.hpp"

namespace rrecon {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Langevin function coth(xi) - 1/xi, evaluated by its series near the origin.
inline double langevin(double xi) {
  if (std::abs(xi) < 1e-4) return xi / 3.0 - xi * xi * xi / 45.0;
  return 1.0 / std::tanh(xi) - 1.0 / xi;
}

// ---------------------------------------------------------------------------
// Phantoms

enum class PhantomKind { ShapeCone, ResolutionTubes, Delta, Custom };

inline std::string_view to_string(PhantomKind k) {
  switch (k) {
    case PhantomKind::ShapeCone: return "shape-cone";
    case PhantomKind::ResolutionTubes: return "resolution-tubes";
    case PhantomKind::Delta: return "delta";
    case PhantomKind::Custom: return "custom";
  }
  return "?";
}

inline PhantomKind parse_phantom_kind(std::string_view s) {
  for (PhantomKind k : {PhantomKind::ShapeCone, PhantomKind::ResolutionTubes, PhantomKind::Delta,
                        PhantomKind::Custom})
    if (s == to_string(k)) return k;
  throw ConfigError("unsupported phantom kind '" + std::string(s) + "'");
}

/// Tracer concentration (mmol/l) per voxel, with the analytic support it was rasterized from.
struct Phantom {
  VoxelGrid grid;
  std::vector<double> concentration;
  PhantomKind kind = PhantomKind::Custom;
  Support support;
  double peak_concentration = 0.0;
};

/// Desk-scale analog of the "shape" phantom: a narrow cone lying along x.
inline Cone default_cone(const VoxelGrid& grid) {
  const double ex = grid.dims[0] * grid.spacing[0];
  const double ey = grid.dims[1] * grid.spacing[1];
  Cone c;
  c.tip = {-0.35 * ex, 0.0, 0.0};
  c.axis = {1.0, 0.0, 0.0};
  c.tip_radius = 0.1 * ey;
  c.half_angle = 5.0 * std::numbers::pi / 180.0;
  c.height = 0.7 * ex;
  return c;
}

/// Desk-scale analog of the "resolution" phantom: five tubes leaving a common origin,
/// three fanning out in the x-y plane and two tilted towards z.
inline TubeSet default_tubes(const VoxelGrid& grid) {
  const double ex = grid.dims[0] * grid.spacing[0];
  const double ey = grid.dims[1] * grid.spacing[1];
  const double deg = std::numbers::pi / 180.0;
  TubeSet t;
  t.origin = {0.0, -0.4 * ey, 0.0};
  t.radius = 0.05 * std::min(ex, ey);
  const double len = 0.75 * ey;
  auto in_plane = [&](double angle) {
    return TubeSet::Tube{{std::sin(angle * deg), std::cos(angle * deg), 0.0}, len};
  };
  auto tilted = [&](double angle) {
    return TubeSet::Tube{{0.0, std::cos(angle * deg), std::sin(angle * deg)}, len};
  };
  t.tubes = {in_plane(-30.0), in_plane(20.0), in_plane(40.0), tilted(10.0), tilted(15.0)};
  return t;
}

/// Rasterizes an analytic phantom. The support defaults to the kind's desk-scale shape.
inline Phantom make_phantom(PhantomKind kind, const VoxelGrid& grid, double concentration,
                            std::optional<Support> support = std::nullopt, int subsamples = 4) {
  grid.validate();
  if (kind == PhantomKind::Custom)
    throw ConfigError("make_phantom: custom phantoms are built with custom_phantom()");
  if (!(concentration > 0.0)) throw ConfigError("make_phantom: concentration must be > 0");

  Phantom p;
  p.grid = grid;
  p.kind = kind;
  p.peak_concentration = concentration;
  if (kind == PhantomKind::Delta) {
    const std::size_t center = grid.index(grid.dims[0] / 2, grid.dims[1] / 2, grid.dims[2] / 2);
    const Vec3 c = grid.center(center);
    p.support = Box{c - 0.5 * grid.spacing, c + 0.5 * grid.spacing};
    p.concentration.assign(grid.size(), 0.0);
    p.concentration[center] = concentration;
    return p;
  }
  if (support) {
    p.support = *support;
  } else if (kind == PhantomKind::ShapeCone) {
    p.support = default_cone(grid);
  } else {
    p.support = default_tubes(grid);
  }
  p.concentration = rasterize(p.support, grid, {0.0, 0.0, 0.0}, concentration, subsamples);
  bool any = false;
  for (double v : p.concentration) any = any || v > 0.0;
  if (!any) throw ConfigError("make_phantom: support does not intersect the voxel grid");
  return p;
}

inline Phantom custom_phantom(const VoxelGrid& grid, std::vector<double> values) {
  grid.validate();
  if (values.size() != grid.size()) throw ConfigError("custom_phantom: value count does not match grid");
  Phantom p;
  p.grid = grid;
  p.kind = PhantomKind::Custom;
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("custom_phantom: concentrations must be finite and >= 0");
    p.peak_concentration = std::max(p.peak_concentration, v);
  }
  p.concentration = std::move(values);
  return p;
}

// ---------------------------------------------------------------------------
// Scanner and system matrix

/// Field-free-point scanner with sinusoidal drive fields on the first `dims` axes.
/// Fields in mT, gradients in T/m (= mT/mm), frequencies in kHz, period in ms.
struct ScannerConfig {
  int dims = 2;
  std::array<double, 3> drive_frequency_khz{16.0, 17.0, 0.0};
  std::array<double, 3> drive_amplitude_mt{12.0, 12.0, 0.0};
  std::array<double, 3> gradient_tpm{2.0, 2.0, 0.0};
  double period_ms = 1.0;
  std::size_t samples_per_period = 2048;
  double particle_diameter_nm = 30.0;
  double temperature_k = 300.0;

  int coils() const { return dims; }
  std::size_t freq_count() const { return samples_per_period / 2 + 1; }

  /// Langevin argument per mT of field magnitude: m_particle / (k_B T).
  double beta_per_mt() const {
    constexpr double saturation = 4.77e5;  // A/m, magnetite
    constexpr double boltzmann = 1.380649e-23;
    const double d = particle_diameter_nm * 1e-9;
    const double volume = std::numbers::pi * d * d * d / 6.0;
    return saturation * volume / (boltzmann * temperature_k) * 1e-3;
  }

  void validate() const {
    if (dims != 1 && dims != 2) throw ConfigError("scanner: dims must be 1 or 2");
    const std::size_t p = samples_per_period;
    if (p < 4 || (p & (p - 1)) != 0) throw ConfigError("scanner: samples per period must be a power of two >= 4");
    if (!(period_ms > 0.0)) throw ConfigError("scanner: period must be > 0");
    if (!(particle_diameter_nm > 0.0) || !(temperature_k > 0.0))
      throw ConfigError("scanner: particle diameter and temperature must be > 0");
    for (int a = 0; a < dims; ++a) {
      const double cycles = drive_frequency_khz[a] * period_ms;
      if (!(drive_frequency_khz[a] > 0.0) || std::abs(cycles - std::round(cycles)) > 1e-9)
        throw ConfigError("scanner: the period must hold a whole number of cycles of every drive frequency");
      if (cycles >= static_cast<double>(p) / 2.0) throw ConfigError("scanner: drive frequency above Nyquist");
      if (drive_amplitude_mt[a] < 0.0) throw ConfigError("scanner: drive amplitude must be >= 0");
    }
  }
};

/// Complex frequency-domain forward operator. Row coil * freq_count + j holds the
/// coefficient of the j-th discrete Fourier basis function for that receive coil;
/// column v is the calibration spectrum of voxel v per unit concentration.
struct SystemMatrix {
  int coils = 0;
  std::size_t freq_count = 0;
  VoxelGrid grid;
  ComplexMatrix rows;

  std::size_t row(int coil, std::size_t freq) const { return static_cast<std::size_t>(coil) * freq_count + freq; }

  ComplexVector apply(const std::vector<double>& x) const {
    if (x.size() != static_cast<std::size_t>(rows.cols()))
      throw ConfigError("system matrix: image size does not match column count");
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    return rows * xv.cast<std::complex<double>>();
  }
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Real-to-complex transform of fixed length; the planner is not thread safe.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    std::lock_guard lock(fftw_planner_mutex());
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  std::complex<double> output(std::size_t j) const { return {out_[j][0], out_[j][1]}; }
  void execute() { fftw_execute(plan_); }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace detail

/// Equilibrium (Langevin) response of every voxel along the drive trajectory.
///
/// For voxel r the field is H_a(r, t) = G_a r_a - A_a sin(2 pi f_a t) on the driven axes.
/// The receive-coil signal is the time derivative of L(beta |H|) H_l / |H|; its spectrum is
/// obtained from the normalized DFT M_j of the magnetization as S_j = i 2 pi (j / T) M_j.
inline SystemMatrix simulate_system_matrix(const ScannerConfig& cfg, const VoxelGrid& grid) {
  cfg.validate();
  grid.validate();
  for (int a = 0; a < cfg.dims; ++a)
    if (cfg.gradient_tpm[a] == 0.0) throw ConfigError("scanner: degenerate (zero) selection-field gradient");
  for (int a = cfg.dims; a < 3; ++a)
    if (grid.dims[a] != 1) throw ConfigError("scanner: grid extends along an axis without drive field");
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const Vec3 c = grid.center(v);
    for (int a = 0; a < cfg.dims; ++a) {
      const double reach = cfg.drive_amplitude_mt[a] / std::abs(cfg.gradient_tpm[a]);
      if (std::abs(c[a]) > reach + 1e-12) throw ConfigError("scanner: voxel grid exceeds the drive field of view");
    }
  }

  const std::size_t p = cfg.samples_per_period;
  const std::size_t nf = cfg.freq_count();
  const int coils = cfg.coils();
  const double beta = cfg.beta_per_mt();

  SystemMatrix s;
  s.coils = coils;
  s.freq_count = nf;
  s.grid = grid;
  s.rows = ComplexMatrix::Zero(static_cast<Eigen::Index>(coils * nf), static_cast<Eigen::Index>(grid.size()));

  // drive[a][n] = A_a sin(2 pi f_a t_n)
  std::vector<std::vector<double>> drive(coils, std::vector<double>(p));
  for (int a = 0; a < coils; ++a)
    for (std::size_t n = 0; n < p; ++n) {
      const double phase = 2.0 * std::numbers::pi * cfg.drive_frequency_khz[a] * cfg.period_ms *
                           static_cast<double>(n) / static_cast<double>(p);
      drive[a][n] = cfg.drive_amplitude_mt[a] * std::sin(phase);
    }

  detail::RealFft fft(p);
  std::vector<double> mag(static_cast<std::size_t>(coils) * p);
  const double norm = 1.0 / static_cast<double>(p);
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const Vec3 c = grid.center(v);
    for (std::size_t n = 0; n < p; ++n) {
      std::array<double, 3> h{0.0, 0.0, 0.0};
      double h2 = 0.0;
      for (int a = 0; a < coils; ++a) {
        h[a] = cfg.gradient_tpm[a] * c[a] - drive[a][n];
        h2 += h[a] * h[a];
      }
      const double hn = std::sqrt(h2);
      const double scale = hn > 0.0 ? langevin(beta * hn) / hn : 0.0;
      for (int a = 0; a < coils; ++a) mag[a * p + n] = scale * h[a];
    }
    for (int a = 0; a < coils; ++a) {
      std::copy_n(mag.begin() + static_cast<std::ptrdiff_t>(a * p), p, fft.input());
      fft.execute();
      for (std::size_t j = 1; j < nf; ++j) {
        const double omega = 2.0 * std::numbers::pi * static_cast<double>(j) / cfg.period_ms;
        s.rows(static_cast<Eigen::Index>(s.row(a, j)), static_cast<Eigen::Index>(v)) =
            std::complex<double>(0.0, omega) * (norm * fft.output(j));
      }
    }
  }
  return s;
}

}  // namespace rrecon

#endif  // RRECON_MODEL_HPP
