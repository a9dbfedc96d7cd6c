#ifndef RRECON_METRICS_HPP
#define RRECON_METRICS_HPP

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "rrecon/errors.hpp"
#include "rrecon/grid.hpp"
#include "rrecon/support.hpp"

namespace rrecon {

/// Rigid shifts on a regular lattice, [-extent_a, extent_a] per axis with a common step.
/// Enumerated lexicographically: x slowest, z fastest.
struct ShiftGrid {
  Vec3 extent{3.0, 3.0, 3.0};
  double step = 0.5;
  std::vector<Vec3> shifts;

  std::size_t size() const { return shifts.size(); }
};

inline ShiftGrid make_shift_grid(const Vec3& extent, double step) {
  if (!(step > 0.0)) throw ConfigError("shift grid: step must be > 0");
  ShiftGrid g;
  g.extent = extent;
  g.step = step;
  std::array<long, 3> count{};
  for (int a = 0; a < 3; ++a) {
    if (!(extent[a] >= 0.0)) throw ConfigError("shift grid: extents must be >= 0");
    const double c = 2.0 * extent[a] / step;
    if (std::abs(c - std::round(c)) > 1e-9) throw ConfigError("shift grid: 2 * extent must be a multiple of the step");
    count[a] = std::lround(c) + 1;
  }
  for (long i = 0; i < count[0]; ++i)
    for (long j = 0; j < count[1]; ++j)
      for (long k = 0; k < count[2]; ++k)
        g.shifts.push_back({-extent[0] + static_cast<double>(i) * step, -extent[1] + static_cast<double>(j) * step,
                            -extent[2] + static_cast<double>(k) * step});
  return g;
}

inline ShiftGrid single_shift(const Vec3& shift = {0.0, 0.0, 0.0}) {
  ShiftGrid g;
  g.extent = {0.0, 0.0, 0.0};
  g.step = 1.0;
  g.shifts = {shift};
  return g;
}

struct ReferenceImage {
  VoxelGrid grid;
  std::vector<double> values;
  Vec3 shift{0.0, 0.0, 0.0};
  double concentration = 0.0;
};

/// c0 times the fraction of the s^3 subsample points of each voxel inside support + shift.
inline ReferenceImage rasterize_reference(const Support& support, const Vec3& shift, const VoxelGrid& grid,
                                          double concentration, int subsamples = 4) {
  if (subsamples < 1) throw ConfigError("reference: subsamples must be >= 1");
  if (!has_membership_test(support)) throw ConfigError("reference: support type has no point-membership test");
  ReferenceImage r;
  r.grid = grid;
  r.shift = shift;
  r.concentration = concentration;
  r.values = rasterize(support, grid, shift, concentration, subsamples);
  return r;
}

/// PSNR in dB, +inf for identical images.
inline double psnr(std::span<const double> x, std::span<const double> ref, double peak) {
  if (!(peak > 0.0)) throw ConfigError("psnr: peak must be > 0");
  if (x.size() != ref.size() || x.empty()) throw ConfigError("psnr: image sizes differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - ref[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

struct SsimWindow {
  int taps = 11;
  double sigma = 1.5;
};

namespace detail {

inline std::size_t reflect(long i, long n) {
  const long period = 2 * n;
  long r = i % period;
  if (r < 0) r += period;
  return static_cast<std::size_t>(r < n ? r : period - 1 - r);
}

// Separable normalized Gaussian filter with symmetric (edge-repeating) boundary handling.
inline std::vector<double> gaussian_filter(const std::vector<double>& img, const std::array<std::size_t, 3>& dims,
                                           const std::vector<double>& kernel) {
  const long half = static_cast<long>(kernel.size() / 2);
  std::vector<double> cur = img, next(img.size());
  const std::array<std::size_t, 3> stride{1, dims[0], dims[0] * dims[1]};
  for (int axis = 0; axis < 3; ++axis) {
    const long n = static_cast<long>(dims[axis]);
    for (std::size_t lin = 0; lin < img.size(); ++lin) {
      const long pos = static_cast<long>((lin / stride[axis]) % dims[axis]);
      const std::size_t base = lin - static_cast<std::size_t>(pos) * stride[axis];
      double acc = 0.0;
      for (long t = -half; t <= half; ++t)
        acc += kernel[static_cast<std::size_t>(t + half)] * cur[base + reflect(pos + t, n) * stride[axis]];
      next[lin] = acc;
    }
    std::swap(cur, next);
  }
  return cur;
}

inline std::vector<double> gaussian_kernel(const SsimWindow& w) {
  if (w.taps < 1 || w.taps % 2 == 0 || !(w.sigma > 0.0)) throw ConfigError("ssim: window needs an odd tap count and sigma > 0");
  std::vector<double> k(static_cast<std::size_t>(w.taps));
  const int half = w.taps / 2;
  double sum = 0.0;
  for (int t = -half; t <= half; ++t) {
    k[static_cast<std::size_t>(t + half)] = std::exp(-0.5 * t * t / (w.sigma * w.sigma));
    sum += k[static_cast<std::size_t>(t + half)];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace detail

/// Mean SSIM over voxel-centered Gaussian windows, C1 = (0.01 L)^2, C2 = (0.03 L)^2.
inline double ssim(std::span<const double> x, std::span<const double> ref, const VoxelGrid& grid,
                   double dynamic_range, const SsimWindow& window = {}) {
  if (!(dynamic_range > 0.0)) throw ConfigError("ssim: dynamic range must be > 0");
  if (x.size() != grid.size() || ref.size() != grid.size()) throw ConfigError("ssim: image sizes differ from grid");
  const auto kernel = detail::gaussian_kernel(window);
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  const std::size_t n = grid.size();
  std::vector<double> vx(x.begin(), x.end()), vr(ref.begin(), ref.end()), xx(n), rr(n), xr(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = vx[i] * vx[i];
    rr[i] = vr[i] * vr[i];
    xr[i] = vx[i] * vr[i];
  }
  const auto mx = detail::gaussian_filter(vx, grid.dims, kernel);
  const auto mr = detail::gaussian_filter(vr, grid.dims, kernel);
  const auto fxx = detail::gaussian_filter(xx, grid.dims, kernel);
  const auto frr = detail::gaussian_filter(rr, grid.dims, kernel);
  const auto fxr = detail::gaussian_filter(xr, grid.dims, kernel);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sxx = fxx[i] - mx[i] * mx[i];
    const double srr = frr[i] - mr[i] * mr[i];
    const double sxr = fxr[i] - mx[i] * mr[i];
    const double num = (2.0 * (mx[i] * mr[i]) + c1) * (2.0 * sxr + c2);
    const double den = (mx[i] * mx[i] + mr[i] * mr[i] + c1) * (sxx + srr + c2);
    total += num / den;
  }
  return total / static_cast<double>(n);
}

enum class QualityMetric { Psnr, Ssim };

struct MetricParams {
  double dynamic_range = 100.0;  // SSIM L
  double peak = 100.0;           // PSNR peak
  SsimWindow window;
};

/// Reference images for every shift of a grid, built once and reused across reconstructions.
struct ReferenceBank {
  VoxelGrid grid;
  ShiftGrid shifts;
  std::vector<ReferenceImage> references;
};

inline ReferenceBank make_reference_bank(const Support& support, const VoxelGrid& grid, const ShiftGrid& shifts,
                                         double concentration, int subsamples = 4) {
  if (shifts.size() == 0) throw ConfigError("shift grid is empty");
  ReferenceBank bank;
  bank.grid = grid;
  bank.shifts = shifts;
  bank.references.reserve(shifts.size());
  for (const Vec3& s : shifts.shifts)
    bank.references.push_back(rasterize_reference(support, s, grid, concentration, subsamples));
  return bank;
}

inline double metric_value(QualityMetric metric, std::span<const double> x, const ReferenceImage& ref,
                           const MetricParams& params) {
  return metric == QualityMetric::Psnr ? psnr(x, ref.values, params.peak)
                                       : ssim(x, ref.values, ref.grid, params.dynamic_range, params.window);
}

struct ShiftMaximum {
  double value = -std::numeric_limits<double>::infinity();
  Vec3 argmax{0.0, 0.0, 0.0};
  std::vector<double> per_shift;
};

/// max over shifts of metric(x, reference at shift); ties keep the earliest shift.
inline ShiftMaximum shift_max_metric(std::span<const double> x, const ReferenceBank& bank, QualityMetric metric,
                                     const MetricParams& params) {
  if (x.size() != bank.grid.size()) throw ConfigError("shift maximum: image size differs from reference grid");
  ShiftMaximum out;
  out.per_shift.reserve(bank.references.size());
  bool first = true;
  for (const ReferenceImage& ref : bank.references) {
    const double v = metric_value(metric, x, ref, params);
    out.per_shift.push_back(v);
    if (first || v > out.value) {
      out.value = v;
      out.argmax = ref.shift;
      first = false;
    }
  }
  return out;
}

inline ShiftMaximum shift_max_metric(std::span<const double> x, const Support& support, const VoxelGrid& grid,
                                     const ShiftGrid& shifts, QualityMetric metric, const MetricParams& params,
                                     double concentration, int subsamples = 4) {
  return shift_max_metric(x, make_reference_bank(support, grid, shifts, concentration, subsamples), metric, params);
}

struct QualityReport {
  double eps_psnr = 0.0;
  double eps_ssim = 0.0;
  Vec3 argmax_psnr{0.0, 0.0, 0.0};
  Vec3 argmax_ssim{0.0, 0.0, 0.0};
  std::vector<Vec3> shifts;
  std::vector<double> psnr_per_shift;
  std::vector<double> ssim_per_shift;
};

inline QualityReport quality_report(std::span<const double> x, const ReferenceBank& bank, const MetricParams& params) {
  const ShiftMaximum p = shift_max_metric(x, bank, QualityMetric::Psnr, params);
  const ShiftMaximum s = shift_max_metric(x, bank, QualityMetric::Ssim, params);
  QualityReport r;
  r.eps_psnr = p.value;
  r.eps_ssim = s.value;
  r.argmax_psnr = p.argmax;
  r.argmax_ssim = s.argmax;
  r.shifts = bank.shifts.shifts;
  r.psnr_per_shift = p.per_shift;
  r.ssim_per_shift = s.per_shift;
  return r;
}

}  // namespace rrecon

#endif  // RRECON_METRICS_HPP
