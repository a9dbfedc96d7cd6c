#ifndef RRECON_CONFIG_HPP
#define RRECON_CONFIG_HPP

// Pipeline configuration: flat `section.key = value` lines, `#` starts a comment.
// Every key has a default; unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rrecon/acquisition.hpp"
#include "rrecon/errors.hpp"
#include "rrecon/metrics.hpp"
#include "rrecon/model.hpp"
#include "rrecon/solvers.hpp"

namespace rrecon {

struct PipelineConfig {
  struct Scanner {
    ScannerConfig physics;
    std::array<std::size_t, 3> grid_dims{20, 20, 1};
    Vec3 grid_spacing{0.5, 0.5, 0.5};
  } scanner;

  struct PhantomSection {
    PhantomKind kind = PhantomKind::ShapeCone;
    double concentration = 50.0;
    double calibration_concentration = 100.0;
    int subsamples = 4;
  } phantom;

  struct Background {
    BackgroundParams params;
  } background;

  struct Preprocess {
    double b1 = 80.0;
    double b2 = 625.0;
    double tau = 0.0;
    bool whiten = false;
    std::size_t k_empty = 41;
    double whitening_floor = 1e-8;
  } preprocess;

  struct Solver {
    Method method = Method::L1L;
    double alpha = std::ldexp(1.0, -10);
    double epsilon = 1e-12;
    SolverConfig cfg;
  } solver;

  struct Metrics {
    MetricParams params;
    double shift_extent = 3.0;
    double shift_step = 0.5;
    int subsamples = 4;
  } metrics;

  struct Sweep {
    int alpha_max_exp = 0;
    int alpha_min_exp = -20;
    int n_max = 200;
  } sweep;

  VoxelGrid grid() const { return centered_grid(scanner.grid_dims, scanner.grid_spacing); }

  /// Shift extents on axes with more than one voxel; zero elsewhere.
  ShiftGrid shift_grid() const {
    Vec3 ext{0.0, 0.0, 0.0};
    for (int a = 0; a < 3; ++a)
      if (scanner.grid_dims[a] > 1) ext[a] = metrics.shift_extent;
    return make_shift_grid(ext, metrics.shift_step);
  }

  std::vector<double> alpha_grid() const {
    std::vector<double> out;
    for (int e = sweep.alpha_max_exp; e >= sweep.alpha_min_exp; --e) out.push_back(std::ldexp(1.0, e));
    return out;
  }

  void validate() const {
    scanner.physics.validate();
    grid().validate();
    if (!(phantom.concentration > 0.0) || !(phantom.calibration_concentration > 0.0))
      throw ConfigError("phantom: concentrations must be > 0");
    if (phantom.subsamples < 1 || metrics.subsamples < 1) throw ConfigError("subsamples must be >= 1");
    if (!(background.params.base_std >= 0.0)) throw ConfigError("background.std must be >= 0");
    if (!(background.params.outlier_scale >= 1.0)) throw ConfigError("background.outlierScale must be >= 1");
    if (!(background.params.outlier_fraction >= 0.0 && background.params.outlier_fraction <= 1.0))
      throw ConfigError("background.outlierFraction must lie in [0, 1]");
    if (preprocess.k_empty < 2) throw ConfigError("preprocess.K must satisfy K >= 2");
    if (!(preprocess.b1 >= 0.0 && preprocess.b1 < preprocess.b2)) throw ConfigError("preprocess: 0 <= b1 < b2 is required");
    if (!(preprocess.tau >= 0.0)) throw ConfigError("preprocess.tau must be >= 0");
    if (!(solver.alpha > 0.0)) throw ConfigError("solver.alpha must be > 0");
    if (!(solver.epsilon > 0.0)) throw ConfigError("solver.epsilon must be > 0");
    solver.cfg.validate();
    if (!(metrics.params.dynamic_range > 0.0) || !(metrics.params.peak > 0.0))
      throw ConfigError("metrics: dynamicRange and peak must be > 0");
    if (sweep.alpha_min_exp > sweep.alpha_max_exp || sweep.n_max < 1) throw ConfigError("sweep: empty grid");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  if (d != std::floor(d) || std::abs(d) > 9.0e15) throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  return static_cast<long long>(d);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
  }
  if (used != v.size() || v.front() == '-') throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

using Setter = std::function<void(PipelineConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters = [] {
    std::map<std::string, Setter> s;
    auto num = [&s](const std::string& k, auto member) {
      s[k] = [member](PipelineConfig& c, const std::string& key, const std::string& v) { member(c) = parse_double(key, v); };
    };
    auto integer = [&s](const std::string& k, auto member) {
      s[k] = [member](PipelineConfig& c, const std::string& key, const std::string& v) {
        member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_int(key, v));
      };
    };
    auto size = [&s](const std::string& k, auto member) {
      s[k] = [member](PipelineConfig& c, const std::string& key, const std::string& v) {
        const long long n = parse_int(key, v);
        if (n < 0) throw ConfigError("config: " + key + " must be >= 0");
        member(c) = static_cast<std::size_t>(n);
      };
    };
    // scanner
    integer("scanner.dims", [](PipelineConfig& c) -> int& { return c.scanner.physics.dims; });
    size("scanner.nx", [](PipelineConfig& c) -> std::size_t& { return c.scanner.grid_dims[0]; });
    size("scanner.ny", [](PipelineConfig& c) -> std::size_t& { return c.scanner.grid_dims[1]; });
    size("scanner.nz", [](PipelineConfig& c) -> std::size_t& { return c.scanner.grid_dims[2]; });
    s["scanner.spacing"] = [](PipelineConfig& c, const std::string& key, const std::string& v) {
      const double d = parse_double(key, v);
      c.scanner.grid_spacing = {d, d, d};
    };
    num("scanner.fx", [](PipelineConfig& c) -> double& { return c.scanner.physics.drive_frequency_khz[0]; });
    num("scanner.fy", [](PipelineConfig& c) -> double& { return c.scanner.physics.drive_frequency_khz[1]; });
    num("scanner.ax", [](PipelineConfig& c) -> double& { return c.scanner.physics.drive_amplitude_mt[0]; });
    num("scanner.ay", [](PipelineConfig& c) -> double& { return c.scanner.physics.drive_amplitude_mt[1]; });
    num("scanner.gx", [](PipelineConfig& c) -> double& { return c.scanner.physics.gradient_tpm[0]; });
    num("scanner.gy", [](PipelineConfig& c) -> double& { return c.scanner.physics.gradient_tpm[1]; });
    num("scanner.period", [](PipelineConfig& c) -> double& { return c.scanner.physics.period_ms; });
    size("scanner.samples", [](PipelineConfig& c) -> std::size_t& { return c.scanner.physics.samples_per_period; });
    num("scanner.diameter", [](PipelineConfig& c) -> double& { return c.scanner.physics.particle_diameter_nm; });
    num("scanner.temperature", [](PipelineConfig& c) -> double& { return c.scanner.physics.temperature_k; });
    // phantom
    s["phantom.kind"] = [](PipelineConfig& c, const std::string&, const std::string& v) {
      c.phantom.kind = parse_phantom_kind(v);
      if (c.phantom.kind == PhantomKind::Custom) throw ConfigError("config: phantom.kind must be analytic");
    };
    num("phantom.concentration", [](PipelineConfig& c) -> double& { return c.phantom.concentration; });
    num("phantom.calibrationConcentration", [](PipelineConfig& c) -> double& { return c.phantom.calibration_concentration; });
    integer("phantom.subsamples", [](PipelineConfig& c) -> int& { return c.phantom.subsamples; });
    // background
    num("background.peak", [](PipelineConfig& c) -> double& { return c.background.params.peak_amplitude; });
    num("background.decay", [](PipelineConfig& c) -> double& { return c.background.params.peak_decay; });
    num("background.std", [](PipelineConfig& c) -> double& { return c.background.params.base_std; });
    num("background.outlierFraction", [](PipelineConfig& c) -> double& { return c.background.params.outlier_fraction; });
    num("background.outlierScale", [](PipelineConfig& c) -> double& { return c.background.params.outlier_scale; });
    num("background.drift", [](PipelineConfig& c) -> double& { return c.background.params.drift; });
    s["background.seed"] = [](PipelineConfig& c, const std::string& key, const std::string& v) {
      c.background.params.seed = parse_u64(key, v);
    };
    // preprocess
    num("preprocess.b1", [](PipelineConfig& c) -> double& { return c.preprocess.b1; });
    s["preprocess.b2"] = [](PipelineConfig& c, const std::string& key, const std::string& v) {
      c.preprocess.b2 = (v == "inf") ? std::numeric_limits<double>::infinity() : parse_double(key, v);
    };
    num("preprocess.tau", [](PipelineConfig& c) -> double& { return c.preprocess.tau; });
    s["preprocess.whiten"] = [](PipelineConfig& c, const std::string& key, const std::string& v) {
      c.preprocess.whiten = parse_bool(key, v);
    };
    size("preprocess.K", [](PipelineConfig& c) -> std::size_t& { return c.preprocess.k_empty; });
    num("preprocess.whiteningFloor", [](PipelineConfig& c) -> double& { return c.preprocess.whitening_floor; });
    // solver
    s["solver.method"] = [](PipelineConfig& c, const std::string&, const std::string& v) { c.solver.method = parse_method(v); };
    num("solver.alpha", [](PipelineConfig& c) -> double& { return c.solver.alpha; });
    num("solver.epsilon", [](PipelineConfig& c) -> double& { return c.solver.epsilon; });
    integer("solver.N", [](PipelineConfig& c) -> int& { return c.solver.cfg.sweeps; });
    integer("solver.m_lbfgs", [](PipelineConfig& c) -> int& { return c.solver.cfg.memory; });
    num("solver.pgtol", [](PipelineConfig& c) -> double& { return c.solver.cfg.pgtol; });
    integer("solver.maxIterations", [](PipelineConfig& c) -> int& { return c.solver.cfg.max_iterations; });
    num("solver.factr", [](PipelineConfig& c) -> double& { return c.solver.cfg.factr; });
    s["solver.rowOrder"] = [](PipelineConfig& c, const std::string& key, const std::string& v) {
      if (v == "sequential") c.solver.cfg.row_order = RowOrder::Sequential;
      else if (v == "shuffled") c.solver.cfg.row_order = RowOrder::Shuffled;
      else throw ConfigError("config: " + key + " expects sequential or shuffled");
    };
    s["solver.projection"] = [](PipelineConfig& c, const std::string& key, const std::string& v) {
      if (v == "sweep") c.solver.cfg.projection = KaczmarzProjection::PerSweep;
      else if (v == "row") c.solver.cfg.projection = KaczmarzProjection::PerRow;
      else if (v == "none") c.solver.cfg.projection = KaczmarzProjection::None;
      else throw ConfigError("config: " + key + " expects sweep, row or none");
    };
    s["solver.seed"] = [](PipelineConfig& c, const std::string& key, const std::string& v) { c.solver.cfg.seed = parse_u64(key, v); };
    // metrics
    num("metrics.dynamicRange", [](PipelineConfig& c) -> double& { return c.metrics.params.dynamic_range; });
    num("metrics.peak", [](PipelineConfig& c) -> double& { return c.metrics.params.peak; });
    num("metrics.shiftExtent", [](PipelineConfig& c) -> double& { return c.metrics.shift_extent; });
    num("metrics.shiftStep", [](PipelineConfig& c) -> double& { return c.metrics.shift_step; });
    integer("metrics.subsamples", [](PipelineConfig& c) -> int& { return c.metrics.subsamples; });
    // sweep
    integer("sweep.alphaMaxExp", [](PipelineConfig& c) -> int& { return c.sweep.alpha_max_exp; });
    integer("sweep.alphaMinExp", [](PipelineConfig& c) -> int& { return c.sweep.alpha_min_exp; });
    integer("sweep.nMax", [](PipelineConfig& c) -> int& { return c.sweep.n_max; });
    return s;
  }();
  return setters;
}

}  // namespace detail

/// Applies one `section.key = value` assignment.
inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const auto& setters = detail::config_setters();
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second(cfg, key, value);
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : detail::config_setters()) out.push_back(k);
  return out;
}

inline PipelineConfig parse_config(std::istream& in) {
  PipelineConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'section.key = value'");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.find('.') == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key + "' has no section");
    set_config_value(cfg, key, value);
  }
  return cfg;
}

inline PipelineConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  return parse_config(in);
}

}  // namespace rrecon

#endif  // RRECON_CONFIG_HPP
