#ifndef RRECON_SOLVERS_HPP
#define RRECON_SOLVERS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "rrecon/errors.hpp"
#include "rrecon/lbfgsb.hpp"
#include "rrecon/preprocess.hpp"

namespace rrecon {

enum class ObjectiveKind { L2Tikhonov, L1sTikhonov };

/// Tikhonov functional over a reduced system; the system must outlive the objective.
struct Objective {
  ObjectiveKind kind = ObjectiveKind::L2Tikhonov;
  const RowMatrix* a = nullptr;
  const Eigen::VectorXd* y = nullptr;
  double alpha = 1.0;
  double epsilon = 1e-12;
};

inline Objective make_objective(ObjectiveKind kind, const ReducedSystem& system, double alpha, double epsilon = 1e-12) {
  if (!(alpha > 0.0)) throw ConfigError("objective: alpha must be > 0");
  if (kind == ObjectiveKind::L1sTikhonov && !(epsilon > 0.0)) throw ConfigError("objective: epsilon must be > 0");
  return Objective{kind, &system.a, &system.y, alpha, epsilon};
}

struct Evaluation {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

namespace detail {
inline void check_dims(const Objective& obj, const Eigen::VectorXd& x) {
  if (obj.a == nullptr || obj.y == nullptr) throw ConfigError("objective: no system attached");
  if (x.size() != obj.a->cols()) throw ConfigError("objective: x has the wrong length");
}
}  // namespace detail

/// 1/2 |Ax - y|^2 + alpha/2 |x|^2 and its gradient A^T(Ax - y) + alpha x.
inline Evaluation eval_l2(const Objective& obj, const Eigen::VectorXd& x) {
  detail::check_dims(obj, x);
  const Eigen::VectorXd r = (*obj.a) * x - *obj.y;
  Evaluation e;
  e.value = 0.5 * r.squaredNorm() + 0.5 * obj.alpha * x.squaredNorm();
  e.gradient = obj.a->transpose() * r + obj.alpha * x;
  return e;
}

/// Smoothed l1 fit: sum_i sqrt(r_i^2 + eps^2) + alpha/2 |x|^2, r = Ax - y.
inline Evaluation eval_l1s(const Objective& obj, const Eigen::VectorXd& x) {
  detail::check_dims(obj, x);
  if (!(obj.epsilon > 0.0)) throw ConfigError("objective: epsilon must be > 0");
  const Eigen::VectorXd r = (*obj.a) * x - *obj.y;
  const double eps2 = obj.epsilon * obj.epsilon;
  const Eigen::ArrayXd root = (r.array().square() + eps2).sqrt();
  Evaluation e;
  e.value = root.sum() + 0.5 * obj.alpha * x.squaredNorm();
  const Eigen::VectorXd weight = (r.array() / root).matrix();
  e.gradient = obj.a->transpose() * weight + obj.alpha * x;
  return e;
}

inline Evaluation evaluate(const Objective& obj, const Eigen::VectorXd& x) {
  return obj.kind == ObjectiveKind::L2Tikhonov ? eval_l2(obj, x) : eval_l1s(obj, x);
}

/// Smoothed l1 norm sum_i sqrt(v_i^2 + eps^2).
inline double smoothed_l1_norm(const Eigen::VectorXd& v, double epsilon) {
  return (v.array().square() + epsilon * epsilon).sqrt().sum();
}

inline Eigen::VectorXd project_nonneg(const Eigen::VectorXd& x) { return x.cwiseMax(0.0); }

enum class RowOrder { Sequential, Shuffled };
enum class KaczmarzProjection { PerSweep, PerRow, None };

struct SolverConfig {
  int memory = 20;
  double pgtol = 1e-10;
  int max_iterations = 10000;
  double factr = 1e7;
  int sweeps = 1;
  RowOrder row_order = RowOrder::Sequential;
  std::uint64_t seed = 0;
  KaczmarzProjection projection = KaczmarzProjection::PerSweep;
  bool record_snapshots = false;
  bool record_history = false;

  void validate() const {
    if (memory < 1) throw ConfigError("solver: m_lbfgs must be >= 1");
    if (!(pgtol > 0.0)) throw ConfigError("solver: pgtol must be > 0");
    if (max_iterations < 0) throw ConfigError("solver: maxIterations must be >= 0");
    if (!(factr >= 0.0)) throw ConfigError("solver: factr must be >= 0");
    if (sweeps < 1) throw ConfigError("solver: N must be >= 1");
  }
};

struct SolverResult {
  Eigen::VectorXd x;
  double objective_value = 0.0;
  double projected_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
  std::vector<Eigen::VectorXd> snapshots;  // Kaczmarz: x after every sweep
  std::vector<double> history;             // L-BFGS-B: objective per accepted iterate
};

inline double nonneg_projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
  double out = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) out = std::max(out, std::abs(std::max(x[i] - g[i], 0.0) - x[i]));
  return out;
}

/// Minimizes the objective over x >= 0 from x = 0.
inline SolverResult lbfgsb(const Objective& obj, const SolverConfig& cfg) {
  cfg.validate();
  const Eigen::Index m = obj.a->cols();
  LbfgsbOptions opt;
  opt.memory = cfg.memory;
  opt.pgtol = cfg.pgtol;
  opt.max_iterations = cfg.max_iterations;
  opt.factr = cfg.factr;
  opt.record_history = cfg.record_history;
  auto fg = [&obj](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    Evaluation e = evaluate(obj, x);
    g = std::move(e.gradient);
    return e.value;
  };
  LbfgsbReport rep = lbfgsb_minimize(fg, Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m),
                                     Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity()), opt);
  SolverResult res;
  res.x = std::move(rep.x);
  res.objective_value = rep.value;
  res.projected_gradient_norm = rep.projected_gradient_norm;
  res.iterations = rep.iterations;
  res.converged = rep.converged;
  res.message = std::move(rep.message);
  res.history = std::move(rep.history);
  return res;
}

/// Regularized Kaczmarz on the augmented system [A, sqrt(alpha) I] (x, v) = y, starting from
/// x = 0, v = 0. Each sweep visits every nonzero row once; x is projected onto x >= 0 after
/// each sweep (or after each row, or never, per cfg.projection).
inline SolverResult kaczmarz_reg(const ReducedSystem& system, double alpha, const SolverConfig& cfg) {
  cfg.validate();
  if (!(alpha >= 0.0)) throw ConfigError("kaczmarz: alpha must be >= 0");
  const RowMatrix& a = system.a;
  const Eigen::VectorXd& y = system.y;
  const Eigen::Index n = a.rows();
  if (y.size() != n) throw ConfigError("kaczmarz: right-hand side length differs from row count");

  const Eigen::VectorXd norms = a.rowwise().squaredNorm();
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < n; ++i)
    if (norms[i] > 0.0) order.push_back(i);
  if (order.empty()) throw NumericalError("kaczmarz: every row of the system is zero");

  const double root_alpha = std::sqrt(alpha);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(a.cols());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  std::mt19937_64 rng(cfg.seed);
  SolverResult res;
  for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
    if (cfg.row_order == RowOrder::Shuffled) std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index i : order) {
      const double beta = (y[i] - a.row(i).dot(x) - root_alpha * v[i]) / (norms[i] + alpha);
      x.noalias() += beta * a.row(i).transpose();
      v[i] += beta * root_alpha;
      if (cfg.projection == KaczmarzProjection::PerRow) x = x.cwiseMax(0.0);
    }
    if (cfg.projection == KaczmarzProjection::PerSweep) x = x.cwiseMax(0.0);
    if (cfg.record_snapshots) res.snapshots.push_back(x);
  }
  res.iterations = cfg.sweeps;
  res.converged = true;
  res.message = "completed sweeps";
  if (alpha > 0.0) {
    const Objective obj{ObjectiveKind::L2Tikhonov, &a, &y, alpha, 1e-12};
    const Evaluation e = eval_l2(obj, x);
    res.objective_value = e.value;
    res.projected_gradient_norm = nonneg_projected_gradient_norm(x, e.gradient);
  } else {
    const Eigen::VectorXd r = a * x - y;
    res.objective_value = 0.5 * r.squaredNorm();
    res.projected_gradient_norm = nonneg_projected_gradient_norm(x, a.transpose() * r);
  }
  res.x = std::move(x);
  return res;
}

// ---------------------------------------------------------------------------
// Reconstruction methods

enum class Method { L1L, L2L, L2K };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::L1L: return "l1-L";
    case Method::L2L: return "l2-L";
    case Method::L2K: return "l2-K";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::L1L, Method::L2L, Method::L2K})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected l1-L, l2-L or l2-K)");
}

/// l1-L: smoothed l1 fit by L-BFGS-B; l2-L: l2 fit by L-BFGS-B; l2-K: regularized Kaczmarz.
inline SolverResult reconstruct(Method method, const ReducedSystem& system, double alpha, double epsilon,
                                const SolverConfig& cfg) {
  switch (method) {
    case Method::L1L: return lbfgsb(make_objective(ObjectiveKind::L1sTikhonov, system, alpha, epsilon), cfg);
    case Method::L2L: return lbfgsb(make_objective(ObjectiveKind::L2Tikhonov, system, alpha), cfg);
    case Method::L2K: return kaczmarz_reg(system, alpha, cfg);
  }
  throw ConfigError("unknown method");
}

}  // namespace rrecon

#endif  // RRECON_SOLVERS_HPP
