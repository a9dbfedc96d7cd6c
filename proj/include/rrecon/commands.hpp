#ifndef RRECON_COMMANDS_HPP
#define RRECON_COMMANDS_HPP

// Batch commands behind the robust-recon CLI. Each command reads verified artifacts
// from an input directory and writes artifacts, CSV tables and a summary into an
// output directory; wall times go to unhashed `.timing` sidecars.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "rrecon/io.hpp"
#include "rrecon/pipeline.hpp"

namespace rrecon {

namespace fs = std::filesystem;

namespace files {
inline constexpr const char* kCalibration = "system_matrix.rrc";
inline constexpr const char* kPhantom = "phantom.rrc";
inline constexpr const char* kEmpty = "empty_scans.rrc";
inline constexpr const char* kMeasurement = "measurement.rrc";
inline constexpr const char* kReducedA = "reduced_a.rrc";
inline constexpr const char* kReducedY = "reduced_y.rrc";
inline constexpr const char* kRows = "rows.csv";
inline constexpr const char* kSelection = "selection.csv";
inline constexpr const char* kPreprocessSummary = "preprocess_summary.txt";
inline constexpr const char* kReconstruction = "reconstruction.rrc";
inline constexpr const char* kReconstructSummary = "reconstruct_summary.txt";
inline constexpr const char* kQuality = "quality.csv";
inline constexpr const char* kQualitySummary = "quality_summary.txt";
}  // namespace files

/// Shortest round-trip decimal text for a double ("inf", "-inf", "nan" for non-finite values).
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace detail {

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

inline std::string timing_line(const char* command, double seconds) {
  return std::string(command) + " wall_seconds " + fmt(seconds) + "\n";
}

inline SpectrumSet single_column(const ComplexVector& v, int coils, std::size_t freq_count) {
  SpectrumSet s;
  s.coils = coils;
  s.freq_count = freq_count;
  s.data = v;
  return s;
}

inline void check_spectra(const PipelineConfig& cfg, const SpectrumSet& s, const char* what) {
  const ScannerConfig& sc = cfg.scanner.physics;
  if (s.coils != sc.coils() || s.freq_count != sc.freq_count())
    throw ConfigError(std::string(what) + ": spectrum shape differs from the configured scanner");
}

inline ReducedSystem load_reduced_system(const PipelineConfig& cfg, const fs::path& in) {
  ReducedSystem sys;
  sys.a = matrix_from(read_verified_artifact(in, files::kReducedA));
  sys.y = vector_from(read_verified_artifact(in, files::kReducedY));
  if (sys.y.size() != sys.a.rows()) throw IoError("reduced system: y length differs from the row count of A");
  if (static_cast<std::size_t>(sys.a.cols()) != cfg.grid().size())
    throw ConfigError("reduced system: column count differs from the configured grid");
  return sys;
}

/// Runs body(i) for i in [0, count) on up to `jobs` threads; the first exception is rethrown.
template <typename Body>
void parallel_for(std::size_t count, int jobs, Body body) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  if (workers <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline std::string cmd_simulate(const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  detail::Stopwatch clock;
  OutputDir dir(out);
  const SimulationData sim = simulate(cfg);
  const auto& sc = cfg.scanner.physics;
  dir.put(files::kCalibration, to_artifact(sim.calibration));
  dir.put(files::kPhantom, image_artifact(sim.phantom.concentration, sim.phantom.grid));
  dir.put(files::kEmpty, to_artifact(sim.empties.scans));
  dir.put(files::kMeasurement, to_artifact(detail::single_column(sim.measurement.spectrum, sc.coils(), sc.freq_count())));
  dir.commit();
  dir.put_sidecar("simulate.timing", detail::timing_line("simulate", clock.seconds()));

  std::string s;
  s += "coils " + std::to_string(sc.coils()) + "\n";
  s += "frequencies " + std::to_string(sc.freq_count()) + "\n";
  s += "voxels " + std::to_string(sim.phantom.grid.size()) + "\n";
  s += "empty_scans " + std::to_string(sim.empties.size()) + "\n";
  s += "outlier_components " + std::to_string(sim.background.outliers.size()) + "\n";
  return s;
}

inline std::string cmd_preprocess(const PipelineConfig& cfg, const fs::path& in, const fs::path& out) {
  cfg.validate();
  detail::Stopwatch clock;
  const SpectrumSet calibration = spectrum_set_from(read_verified_artifact(in, files::kCalibration));
  EmptyScanSet empties;
  empties.scans = spectrum_set_from(read_verified_artifact(in, files::kEmpty));
  const SpectrumSet measurement = spectrum_set_from(read_verified_artifact(in, files::kMeasurement));
  detail::check_spectra(cfg, calibration, "calibration scans");
  detail::check_spectra(cfg, empties.scans, "empty scans");
  detail::check_spectra(cfg, measurement, "measurement");
  if (measurement.count() != 1) throw IoError("measurement: expected a single spectrum");
  if (calibration.count() != cfg.grid().size()) throw ConfigError("calibration scans: count differs from the voxel count");
  empties.schedule = make_calibration_schedule(calibration.count(), empties.size()).empty_positions;

  const PreprocessResult pr = preprocess(cfg, calibration, empties, measurement.data.col(0));
  const ReducedSystem& sys = pr.system;

  OutputDir dir(out);
  dir.put(files::kReducedA, to_artifact(sys.a));
  dir.put(files::kReducedY, to_artifact(sys.y));
  std::string rows = "row,coil,freq_index,part\n";
  for (std::size_t i = 0; i < sys.rows.size(); ++i)
    rows += std::to_string(i) + "," + std::to_string(sys.rows[i].coil) + "," + std::to_string(sys.rows[i].freq) + "," +
            (sys.rows[i].imag ? "imag" : "real") + "\n";
  dir.put(files::kRows, rows);
  std::string sel = "coil,band,retained\n";
  for (std::size_t c = 0; c < pr.selection.selected.size(); ++c)
    sel += std::to_string(c) + "," + std::to_string(pr.selection.band.size()) + "," +
           std::to_string(pr.selection.selected[c].size()) + "\n";
  dir.put(files::kSelection, sel);

  std::string s;
  s += "n " + std::to_string(sys.n()) + "\n";
  s += "m " + std::to_string(sys.m()) + "\n";
  s += "tau " + fmt(cfg.preprocess.tau) + "\n";
  s += std::string("whitened ") + (sys.whitened ? "true" : "false") + "\n";
  s += "scale " + fmt(sys.scale) + "\n";
  dir.put(files::kPreprocessSummary, s);
  dir.commit();
  dir.put_sidecar("preprocess.timing", detail::timing_line("preprocess", clock.seconds()));
  return s;
}

inline std::string cmd_reconstruct(const PipelineConfig& cfg, const fs::path& in, const fs::path& out) {
  cfg.validate();
  const ReducedSystem sys = detail::load_reduced_system(cfg, in);
  detail::Stopwatch clock;
  const SolverResult res = reconstruct(cfg, sys);
  const double wall = clock.seconds();
  if (!res.x.allFinite()) throw NumericalError("reconstruct: solver produced non-finite values");

  OutputDir dir(out);
  const std::vector<double> x(res.x.data(), res.x.data() + res.x.size());
  dir.put(files::kReconstruction, image_artifact(x, cfg.grid()));
  std::string s;
  s += "method " + std::string(to_string(cfg.solver.method)) + "\n";
  s += "alpha " + fmt(cfg.solver.alpha) + "\n";
  if (cfg.solver.method == Method::L1L) s += "epsilon " + fmt(cfg.solver.epsilon) + "\n";
  s += std::string(cfg.solver.method == Method::L2K ? "sweeps " : "iterations ") + std::to_string(res.iterations) + "\n";
  s += "objective " + fmt(res.objective_value) + "\n";
  s += "projected_gradient_norm " + fmt(res.projected_gradient_norm) + "\n";
  s += std::string("converged ") + (res.converged ? "true" : "false") + "\n";
  s += "message " + res.message + "\n";
  dir.put(files::kReconstructSummary, s);
  dir.commit();
  dir.put_sidecar("reconstruct.timing", detail::timing_line("reconstruct", wall));
  return s + "wall_seconds " + fmt(wall) + "\n";
}

inline std::string cmd_evaluate(const PipelineConfig& cfg, const fs::path& in, const fs::path& out) {
  cfg.validate();
  detail::Stopwatch clock;
  const VoxelGrid grid = cfg.grid();
  const std::vector<double> x = image_from(read_verified_artifact(in, files::kReconstruction), grid);
  const ReferenceBank bank = pipeline_references(cfg, pipeline_phantom(cfg));
  const QualityReport q = quality_report(x, bank, cfg.metrics.params);

  OutputDir dir(out);
  std::string csv = "shift_x,shift_y,shift_z,psnr,ssim\n";
  for (std::size_t i = 0; i < q.shifts.size(); ++i)
    csv += fmt(q.shifts[i][0]) + "," + fmt(q.shifts[i][1]) + "," + fmt(q.shifts[i][2]) + "," + fmt(q.psnr_per_shift[i]) +
           "," + fmt(q.ssim_per_shift[i]) + "\n";
  dir.put(files::kQuality, csv);
  auto vec = [](const Vec3& v) { return fmt(v[0]) + " " + fmt(v[1]) + " " + fmt(v[2]); };
  std::string s;
  s += "eps_psnr " + fmt(q.eps_psnr) + "\n";
  s += "argmax_psnr " + vec(q.argmax_psnr) + "\n";
  s += "eps_ssim " + fmt(q.eps_ssim) + "\n";
  s += "argmax_ssim " + vec(q.argmax_ssim) + "\n";
  s += "shifts " + std::to_string(q.shifts.size()) + "\n";
  dir.put(files::kQualitySummary, s);
  dir.commit();
  dir.put_sidecar("evaluate.timing", detail::timing_line("evaluate", clock.seconds()));
  return s;
}

// ---------------------------------------------------------------------------
// Sweep tables

/// Metric table over alpha (rows) and N (columns); L-BFGS-B methods have a single column.
struct SweepTable {
  std::vector<int> alpha_exponents;
  std::vector<int> sweeps;  // column labels; 0 marks a run to convergence
  Eigen::MatrixXd psnr;
  Eigen::MatrixXd ssim;
};

inline SweepTable run_sweep(const PipelineConfig& cfg, const ReducedSystem& sys, const ReferenceBank& bank, int jobs = 1) {
  SweepTable t;
  for (int e = cfg.sweep.alpha_max_exp; e >= cfg.sweep.alpha_min_exp; --e) t.alpha_exponents.push_back(e);
  const bool kaczmarz = cfg.solver.method == Method::L2K;
  if (kaczmarz)
    for (int n = 1; n <= cfg.sweep.n_max; ++n) t.sweeps.push_back(n);
  else
    t.sweeps.push_back(0);
  if (t.alpha_exponents.empty() || t.sweeps.empty()) throw ConfigError("sweep: empty grid");
  const auto rows = static_cast<Eigen::Index>(t.alpha_exponents.size());
  const auto cols = static_cast<Eigen::Index>(t.sweeps.size());
  t.psnr.resize(rows, cols);
  t.ssim.resize(rows, cols);

  detail::parallel_for(t.alpha_exponents.size(), jobs, [&](std::size_t r) {
    const double alpha = std::ldexp(1.0, t.alpha_exponents[r]);
    SolverConfig scfg = cfg.solver.cfg;
    std::vector<Eigen::VectorXd> images;
    if (kaczmarz) {
      scfg.sweeps = cfg.sweep.n_max;
      scfg.record_snapshots = true;
      images = kaczmarz_reg(sys, alpha, scfg).snapshots;
    } else {
      images.push_back(reconstruct(cfg.solver.method, sys, alpha, cfg.solver.epsilon, scfg).x);
    }
    for (std::size_t c = 0; c < images.size(); ++c) {
      const std::span<const double> x(images[c].data(), static_cast<std::size_t>(images[c].size()));
      const auto ri = static_cast<Eigen::Index>(r);
      const auto ci = static_cast<Eigen::Index>(c);
      t.psnr(ri, ci) = shift_max_metric(x, bank, QualityMetric::Psnr, cfg.metrics.params).value;
      t.ssim(ri, ci) = shift_max_metric(x, bank, QualityMetric::Ssim, cfg.metrics.params).value;
    }
  });
  return t;
}

namespace detail {

inline std::string column_label(int n) { return n == 0 ? "converged" : "N" + std::to_string(n); }

inline std::string table_csv(const SweepTable& t, const Eigen::MatrixXd& v) {
  std::string s = "alpha_exp,alpha";
  for (int n : t.sweeps) s += "," + column_label(n);
  s += "\n";
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const int e = t.alpha_exponents[static_cast<std::size_t>(r)];
    s += std::to_string(e) + "," + fmt(std::ldexp(1.0, e));
    for (Eigen::Index c = 0; c < v.cols(); ++c) s += "," + fmt(v(r, c));
    s += "\n";
  }
  return s;
}

// Maximum of each row over N; ties keep the smallest N.
inline std::string row_max_csv(const SweepTable& t, const Eigen::MatrixXd& v) {
  std::string s = "alpha_exp,alpha,max,argmax_N\n";
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < v.cols(); ++c)
      if (v(r, c) > v(r, best)) best = c;
    const int e = t.alpha_exponents[static_cast<std::size_t>(r)];
    s += std::to_string(e) + "," + fmt(std::ldexp(1.0, e)) + "," + fmt(v(r, best)) + "," +
         std::to_string(t.sweeps[static_cast<std::size_t>(best)]) + "\n";
  }
  return s;
}

// Maximum of each column over alpha; ties keep the largest alpha.
inline std::string col_max_csv(const SweepTable& t, const Eigen::MatrixXd& v) {
  std::string s = "N,max,argmax_alpha_exp\n";
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < v.rows(); ++r)
      if (v(r, c) > v(best, c)) best = r;
    s += std::to_string(t.sweeps[static_cast<std::size_t>(c)]) + "," + fmt(v(best, c)) + "," +
         std::to_string(t.alpha_exponents[static_cast<std::size_t>(best)]) + "\n";
  }
  return s;
}

}  // namespace detail

inline std::string cmd_sweep(const PipelineConfig& cfg, const fs::path& in, const fs::path& out, int jobs = 1) {
  cfg.validate();
  if (jobs < 1) throw ConfigError("sweep: --jobs must be >= 1");
  detail::Stopwatch clock;
  const ReducedSystem sys = detail::load_reduced_system(cfg, in);
  const ReferenceBank bank = pipeline_references(cfg, pipeline_phantom(cfg));
  const SweepTable t = run_sweep(cfg, sys, bank, jobs);

  OutputDir dir(out);
  const std::string method(to_string(cfg.solver.method));
  for (const auto& [name, v] : {std::pair<std::string, const Eigen::MatrixXd*>{"psnr", &t.psnr}, {"ssim", &t.ssim}}) {
    const std::string stem = "sweep_" + method + "_" + name;
    dir.put(stem + ".csv", detail::table_csv(t, *v));
    dir.put(stem + "_row_max.csv", detail::row_max_csv(t, *v));
    dir.put(stem + "_col_max.csv", detail::col_max_csv(t, *v));
  }
  dir.commit();
  dir.put_sidecar("sweep_" + method + ".timing", detail::timing_line("sweep", clock.seconds()));

  Eigen::Index pr = 0, pc = 0, sr = 0, sc = 0;
  const double best_psnr = t.psnr.maxCoeff(&pr, &pc);
  const double best_ssim = t.ssim.maxCoeff(&sr, &sc);
  std::string s;
  s += "method " + method + "\n";
  s += "cells " + std::to_string(t.psnr.size()) + "\n";
  s += "best_psnr " + fmt(best_psnr) + " alpha_exp " + std::to_string(t.alpha_exponents[static_cast<std::size_t>(pr)]) +
       " " + detail::column_label(t.sweeps[static_cast<std::size_t>(pc)]) + "\n";
  s += "best_ssim " + fmt(best_ssim) + " alpha_exp " + std::to_string(t.alpha_exponents[static_cast<std::size_t>(sr)]) +
       " " + detail::column_label(t.sweeps[static_cast<std::size_t>(sc)]) + "\n";
  return s;
}

}  // namespace rrecon

#endif  // RRECON_COMMANDS_HPP
