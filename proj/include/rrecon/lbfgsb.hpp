#ifndef RRECON_LBFGSB_HPP
#define RRECON_LBFGSB_HPP

// Limited-memory BFGS with simple bounds (Byrd, Lu, Nocedal, Zhu). Each iteration
//   1. finds the generalized Cauchy point along the projected steepest-descent path of the
//      compact limited-memory quadratic model B = theta I - W M W^T,
//   2. minimizes the model over the variables that are free at the Cauchy point and
//      truncates that step to the box,
//   3. runs a strong Wolfe line search along the resulting feasible direction.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "rrecon/errors.hpp"

namespace rrecon {

struct LbfgsbOptions {
  int memory = 20;
  double pgtol = 1e-10;
  int max_iterations = 10000;
  // Stop when (f_k - f_k+1) / max(|f_k|, |f_k+1|, 1) <= factr * machine epsilon; 0 disables.
  double factr = 1e7;
  int max_line_search = 40;
  double c1 = 1e-4;
  double c2 = 0.9;
  bool record_history = false;
};

struct LbfgsbReport {
  Eigen::VectorXd x;
  double value = 0.0;
  double projected_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
  std::vector<double> history;  // objective at every accepted iterate, starting with x0
};

/// sup-norm of P(x - g) - x.
inline double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                                      const Eigen::VectorXd& upper) {
  double out = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double p = std::clamp(x[i] - g[i], lower[i], upper[i]) - x[i];
    out = std::max(out, std::abs(p));
  }
  return out;
}

namespace detail {

// Compact representation B = theta I - W M W^T of the limited-memory BFGS matrix.
class LbfgsMemory {
 public:
  explicit LbfgsMemory(int capacity) : capacity_(capacity) {}

  bool empty() const { return s_.empty(); }
  std::size_t size() const { return s_.size(); }
  double theta() const { return theta_; }
  const Eigen::MatrixXd& w() const { return w_; }
  const Eigen::MatrixXd& m() const { return m_; }

  void clear() {
    s_.clear();
    y_.clear();
    theta_ = 1.0;
    w_.resize(0, 0);
    m_.resize(0, 0);
  }

  // Returns false when the pair fails the curvature test and is discarded.
  bool push(Eigen::VectorXd s, Eigen::VectorXd y) {
    const double sy = s.dot(y);
    if (!(sy > 1e-12 * s.norm() * y.norm())) return false;
    if (static_cast<int>(s_.size()) == capacity_) {
      s_.pop_front();
      y_.pop_front();
    }
    theta_ = y.squaredNorm() / sy;
    s_.push_back(std::move(s));
    y_.push_back(std::move(y));
    rebuild();
    return true;
  }

 private:
  void rebuild() {
    const auto k = static_cast<Eigen::Index>(s_.size());
    const Eigen::Index n = s_.front().size();
    Eigen::MatrixXd s(n, k), y(n, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      s.col(j) = s_[static_cast<std::size_t>(j)];
      y.col(j) = y_[static_cast<std::size_t>(j)];
    }
    w_.resize(n, 2 * k);
    w_.leftCols(k) = y;
    w_.rightCols(k) = theta_ * s;

    const Eigen::MatrixXd sy = s.transpose() * y;
    Eigen::MatrixXd middle = Eigen::MatrixXd::Zero(2 * k, 2 * k);
    for (Eigen::Index i = 0; i < k; ++i) {
      middle(i, i) = -sy(i, i);
      for (Eigen::Index j = 0; j < i; ++j) {
        middle(k + i, j) = sy(i, j);  // L
        middle(j, k + i) = sy(i, j);  // L^T
      }
    }
    middle.bottomRightCorner(k, k) = theta_ * (s.transpose() * s);
    m_ = middle.fullPivLu().inverse();
  }

  int capacity_;
  std::deque<Eigen::VectorXd> s_, y_;
  double theta_ = 1.0;
  Eigen::MatrixXd w_, m_;
};

struct CauchyPoint {
  Eigen::VectorXd x;
  Eigen::VectorXd c;  // W^T (x_cp - x)
};

inline CauchyPoint generalized_cauchy_point(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                            const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                            const LbfgsMemory& mem) {
  const Eigen::Index n = x.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double theta = mem.theta();
  const Eigen::MatrixXd& w = mem.w();
  const Eigen::MatrixXd& m = mem.m();
  const Eigen::Index k2 = w.cols();

  Eigen::VectorXd t(n), d(n);
  std::vector<Eigen::Index> breaks;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (g[i] < 0.0 && upper[i] < inf) {
      t[i] = (x[i] - upper[i]) / g[i];
    } else if (g[i] > 0.0 && lower[i] > -inf) {
      t[i] = (x[i] - lower[i]) / g[i];
    } else {
      t[i] = inf;
    }
    d[i] = t[i] == 0.0 ? 0.0 : -g[i];
    if (t[i] > 0.0 && t[i] < inf) breaks.push_back(i);
  }
  std::sort(breaks.begin(), breaks.end(), [&](Eigen::Index a, Eigen::Index b) {
    return t[a] < t[b] || (t[a] == t[b] && a < b);
  });

  CauchyPoint cp;
  cp.x = x;
  cp.c = Eigen::VectorXd::Zero(k2);
  Eigen::VectorXd p = k2 > 0 ? Eigen::VectorXd(w.transpose() * d) : Eigen::VectorXd::Zero(0);
  double fp = -d.squaredNorm();
  double fpp = -theta * fp - (k2 > 0 ? p.dot(m * p) : 0.0);
  const double fpp_floor = std::numeric_limits<double>::epsilon() * std::max(1.0, -theta * fp);
  fpp = std::max(fpp, fpp_floor);
  double dt_min = fp == 0.0 ? 0.0 : -fp / fpp;
  double t_old = 0.0;

  std::vector<char> passed(static_cast<std::size_t>(n), 0);
  for (Eigen::Index b : breaks) {
    const double dt = t[b] - t_old;
    if (dt_min < dt) break;
    const double bound = d[b] > 0.0 ? upper[b] : lower[b];
    const double zb = bound - x[b];
    cp.x[b] = bound;
    passed[static_cast<std::size_t>(b)] = 1;
    const double gb = g[b];
    if (k2 > 0) {
      cp.c += dt * p;
      const Eigen::VectorXd wb = w.row(b).transpose();
      const Eigen::VectorXd mc = m * cp.c;
      const Eigen::VectorXd mp = m * p;
      fp += dt * fpp + gb * gb + theta * gb * zb - gb * wb.dot(mc);
      fpp += -theta * gb * gb - 2.0 * gb * wb.dot(mp) - gb * gb * wb.dot(m * wb);
      p += gb * wb;
    } else {
      fp += dt * fpp + gb * gb + theta * gb * zb;
      fpp += -theta * gb * gb;
    }
    d[b] = 0.0;
    fpp = std::max(fpp, fpp_floor);
    dt_min = -fp / fpp;
    t_old = t[b];
  }
  dt_min = std::max(dt_min, 0.0);
  t_old += dt_min;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!passed[static_cast<std::size_t>(i)]) cp.x[i] = std::clamp(x[i] + t_old * d[i], lower[i], upper[i]);
  if (k2 > 0) cp.c += dt_min * p;
  return cp;
}

// Minimizes the model over the variables free at the Cauchy point, then truncates the step to the box.
inline Eigen::VectorXd subspace_minimum(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                        const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                        const LbfgsMemory& mem, const CauchyPoint& cp) {
  if (mem.empty()) return cp.x;
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (cp.x[i] > lower[i] && cp.x[i] < upper[i]) free.push_back(i);
  if (free.empty()) return cp.x;

  const double theta = mem.theta();
  const Eigen::MatrixXd& w = mem.w();
  const Eigen::MatrixXd& m = mem.m();
  const auto nf = static_cast<Eigen::Index>(free.size());

  // reduced gradient of the model at the Cauchy point
  const Eigen::VectorXd wmc = w * (m * cp.c);
  Eigen::MatrixXd wz(nf, w.cols());
  Eigen::VectorXd rc(nf);
  for (Eigen::Index j = 0; j < nf; ++j) {
    const Eigen::Index i = free[static_cast<std::size_t>(j)];
    wz.row(j) = w.row(i);
    rc[j] = g[i] + theta * (cp.x[i] - x[i]) - wmc[i];
  }
  // reduced Newton step by Sherman-Morrison-Woodbury
  const Eigen::Index k2 = w.cols();
  Eigen::VectorXd v = m * (wz.transpose() * rc);
  const Eigen::MatrixXd nmat = Eigen::MatrixXd::Identity(k2, k2) - (1.0 / theta) * (m * (wz.transpose() * wz));
  v = nmat.fullPivLu().solve(v);
  const Eigen::VectorXd du = -(1.0 / theta) * rc - (1.0 / (theta * theta)) * (wz * v);

  double alpha = 1.0;
  for (Eigen::Index j = 0; j < nf; ++j) {
    const Eigen::Index i = free[static_cast<std::size_t>(j)];
    if (du[j] < 0.0) alpha = std::min(alpha, (lower[i] - cp.x[i]) / du[j]);
    if (du[j] > 0.0) alpha = std::min(alpha, (upper[i] - cp.x[i]) / du[j]);
  }
  alpha = std::max(alpha, 0.0);
  Eigen::VectorXd out = cp.x;
  for (Eigen::Index j = 0; j < nf; ++j) {
    const Eigen::Index i = free[static_cast<std::size_t>(j)];
    out[i] = std::clamp(cp.x[i] + alpha * du[j], lower[i], upper[i]);
  }
  return out;
}

inline double max_feasible_step(const Eigen::VectorXd& x, const Eigen::VectorXd& d, const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper) {
  double step = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (d[i] < 0.0 && lower[i] > -std::numeric_limits<double>::infinity())
      step = std::min(step, (lower[i] - x[i]) / d[i]);
    else if (d[i] > 0.0 && upper[i] < std::numeric_limits<double>::infinity())
      step = std::min(step, (upper[i] - x[i]) / d[i]);
  }
  return std::max(step, 0.0);
}

struct LineSearchPoint {
  double step = 0.0;
  double value = 0.0;
  double slope = 0.0;
  Eigen::VectorXd x, g;
};

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), safeguarded into the
// middle 80% of the interval.
inline double interpolate_step(double a, double fa, double da, double b, double fb, double db) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double margin = 0.1 * (hi - lo);
  double step = 0.5 * (a + b);
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = db - da + 2.0 * d2;
    if (denom != 0.0) {
      const double cand = b - (b - a) * (db + d2 - d1) / denom;
      if (std::isfinite(cand)) step = cand;
    }
  }
  return std::clamp(step, lo + margin, hi - margin);
}

// Strong Wolfe search on phi(step) = f(P(x + step d)) over (0, max_step].
template <typename Fn>
bool strong_wolfe_search(Fn& fg, const Eigen::VectorXd& x, double f0, const Eigen::VectorXd& g0,
                         const Eigen::VectorXd& d, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                         double initial, double max_step, const LbfgsbOptions& opt, LineSearchPoint& out) {
  const double slope0 = g0.dot(d);
  int evals = 0;
  auto evaluate = [&](double step) {
    LineSearchPoint p;
    p.step = step;
    p.x = (x + step * d).cwiseMax(lower).cwiseMin(upper);
    p.g.resize(x.size());
    p.value = fg(p.x, p.g);
    p.slope = p.g.dot(d);
    ++evals;
    if (!std::isfinite(p.value) || !p.g.allFinite()) {
      p.value = std::numeric_limits<double>::infinity();
      p.slope = std::numeric_limits<double>::quiet_NaN();
    }
    return p;
  };
  // Armijo, or its derivative form (approximate Wolfe) when f differences are at rounding level.
  auto armijo = [&](const LineSearchPoint& p) {
    if (p.value <= f0 + opt.c1 * p.step * slope0) return true;
    return p.value <= f0 && p.slope <= (2.0 * opt.c1 - 1.0) * slope0;
  };
  auto curvature = [&](const LineSearchPoint& p) { return std::abs(p.slope) <= -opt.c2 * slope0; };

  auto zoom = [&](LineSearchPoint lo, LineSearchPoint hi) -> bool {
    while (evals < opt.max_line_search) {
      double step;
      if (std::isfinite(hi.value) && std::isfinite(hi.slope))
        step = interpolate_step(lo.step, lo.value, lo.slope, hi.step, hi.value, hi.slope);
      else
        step = 0.5 * (lo.step + hi.step);
      if (!(std::abs(hi.step - lo.step) > 1e-16 * std::max(1.0, lo.step))) return false;
      LineSearchPoint p = evaluate(step);
      if (!armijo(p) || p.value > lo.value) {
        hi = std::move(p);
      } else {
        if (curvature(p)) {
          out = std::move(p);
          return true;
        }
        if (p.slope * (hi.step - lo.step) >= 0.0) hi = lo;
        lo = std::move(p);
      }
    }
    return false;
  };

  LineSearchPoint prev;
  prev.step = 0.0;
  prev.value = f0;
  prev.slope = slope0;
  prev.x = x;
  prev.g = g0;
  double step = std::min(initial, max_step);
  for (bool first = true; evals < opt.max_line_search; first = false) {
    LineSearchPoint p = evaluate(step);
    if (!armijo(p) || (!first && p.value > prev.value)) return zoom(std::move(prev), std::move(p));
    if (curvature(p)) {
      out = std::move(p);
      return true;
    }
    if (p.slope >= 0.0) return zoom(std::move(p), std::move(prev));
    if (step >= max_step) {  // stopped by the box with sufficient decrease
      out = std::move(p);
      return true;
    }
    prev = std::move(p);
    step = std::min(2.0 * step, max_step);
  }
  return false;
}

}  // namespace detail

/// Minimizes f over the box [lower, upper]. `fg(x, g)` returns f(x) and writes the gradient into g.
template <typename Fn>
LbfgsbReport lbfgsb_minimize(Fn&& fg, Eigen::VectorXd x0, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const LbfgsbOptions& opt = {}) {
  const Eigen::Index n = x0.size();
  if (lower.size() != n || upper.size() != n) throw ConfigError("lbfgsb: bound dimensions differ from x0");
  if (opt.memory < 1) throw ConfigError("lbfgsb: memory must be >= 1");
  if (!(opt.pgtol > 0.0)) throw ConfigError("lbfgsb: pgtol must be > 0");
  if (!(opt.factr >= 0.0)) throw ConfigError("lbfgsb: factr must be >= 0");
  if ((lower.array() > upper.array()).any()) throw ConfigError("lbfgsb: lower bound above upper bound");

  LbfgsbReport rep;
  rep.x = x0.cwiseMax(lower).cwiseMin(upper);
  Eigen::VectorXd g(n);
  rep.value = fg(rep.x, g);
  if (!std::isfinite(rep.value) || !g.allFinite()) throw NumericalError("lbfgsb: non-finite objective or gradient at x0");
  if (opt.record_history) rep.history.push_back(rep.value);

  detail::LbfgsMemory mem(opt.memory);
  for (;;) {
    rep.projected_gradient_norm = projected_gradient_norm(rep.x, g, lower, upper);
    if (rep.projected_gradient_norm <= opt.pgtol) {
      rep.converged = true;
      rep.message = "projected gradient below pgtol";
      return rep;
    }
    if (rep.iterations >= opt.max_iterations) {
      rep.message = "iteration limit reached";
      return rep;
    }

    const detail::CauchyPoint cp = detail::generalized_cauchy_point(rep.x, g, lower, upper, mem);
    Eigen::VectorXd d = detail::subspace_minimum(rep.x, g, lower, upper, mem, cp) - rep.x;
    if (!(g.dot(d) < 0.0)) {
      if (mem.empty()) {
        rep.message = "no descent direction";
        return rep;
      }
      mem.clear();
      continue;
    }
    const double max_step = detail::max_feasible_step(rep.x, d, lower, upper);
    const double initial = rep.iterations == 0 ? std::min(1.0 / d.norm(), max_step) : std::min(1.0, max_step);

    detail::LineSearchPoint next;
    if (!detail::strong_wolfe_search(fg, rep.x, rep.value, g, d, lower, upper, initial, max_step, opt, next)) {
      if (!mem.empty()) {
        mem.clear();
        continue;
      }
      rep.message = "line search failed";
      return rep;
    }
    mem.push(next.x - rep.x, next.g - g);
    const double reduction = (rep.value - next.value) / std::max({std::abs(rep.value), std::abs(next.value), 1.0});
    rep.x = std::move(next.x);
    g = std::move(next.g);
    rep.value = next.value;
    ++rep.iterations;
    if (opt.record_history) rep.history.push_back(rep.value);
    if (opt.factr > 0.0 && reduction <= opt.factr * std::numeric_limits<double>::epsilon()) {
      rep.projected_gradient_norm = projected_gradient_norm(rep.x, g, lower, upper);
      rep.converged = rep.projected_gradient_norm <= opt.pgtol;
      rep.message = rep.converged ? "projected gradient below pgtol" : "relative reduction below factr";
      return rep;
    }
  }
}

}  // namespace rrecon

#endif  // RRECON_LBFGSB_HPP
