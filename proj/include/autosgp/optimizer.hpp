#ifndef AUTOSGP_OPTIMIZER_HPP
#define AUTOSGP_OPTIMIZER_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "autosgp/errors.hpp"

namespace autosgp {

struct LbfgsConfig {
  int memory_pairs = 10;
  int max_iterations = 1000;
  /// Infinity norm of the gradient, unconstrained space.
  double grad_tol = 1e-6;
  int max_restarts = 5;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search_trials = 25;
  /// Stop when (f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1) <= f_rel_tol.
  /// Zero disables the test.
  double f_rel_tol = 0.0;

  void validate() const {
    if (memory_pairs < 1 || max_iterations < 1 || max_restarts < 0 || max_line_search_trials < 1) {
      throw std::invalid_argument("LbfgsConfig: counts must be positive");
    }
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) throw std::invalid_argument("LbfgsConfig: need 0 < c1 < c2 < 1");
  }
};

enum class Termination { GradTol, MaxIters, LineSearchStall, RestartsExhausted, FunctionTol };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::GradTol: return "GradTol";
    case Termination::MaxIters: return "MaxIters";
    case Termination::LineSearchStall: return "LineSearchStall";
    case Termination::RestartsExhausted: return "RestartsExhausted";
    case Termination::FunctionTol: return "FunctionTol";
  }
  return "?";
}

struct OptResult {
  Eigen::VectorXd x_final;
  double f_final = 0.0;
  double grad_norm_final = 0.0;
  int iterations = 0;
  int restarts_used = 0;
  int evaluations = 0;
  Termination termination = Termination::MaxIters;
};

/// Objective to minimize: returns f(x) and writes the gradient. May throw
/// NonFiniteObjective or return non-finite values; both trigger a restart.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

namespace detail {

struct Point {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd g;
};

struct Evaluator {
  const Objective& fn;
  int count = 0;

  bool operator()(const Eigen::VectorXd& x, Point& out) {
    ++count;
    out.x = x;
    out.g.resize(x.size());
    try {
      out.f = fn(x, out.g);
    } catch (const NonFiniteObjective&) {
      return false;
    }
    return std::isfinite(out.f) && out.g.size() == x.size() && out.g.allFinite();
  }
};

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), or NaN.
inline double cubic_minimizer(double a, double fa, double da, double b, double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (disc < 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  const double denom = db - da + 2.0 * d2;
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return b - (b - a) * (db + d2 - d1) / denom;
}

enum class SearchStatus { Ok, NonFinite, Stall };

struct SearchOutcome {
  SearchStatus status = SearchStatus::Stall;
  Point point;
};

// Strong-Wolfe line search (bracketing then zoom with safeguarded cubic
// interpolation). Any non-finite trial aborts the search.
inline SearchOutcome strong_wolfe(Evaluator& eval, const Point& start, const Eigen::VectorXd& dir, double alpha0,
                                  const LbfgsConfig& cfg) {
  const double f0 = start.f;
  const double d0 = start.g.dot(dir);
  int trials = 0;
  SearchOutcome out;
  Point trial;

  auto try_step = [&](double alpha) -> bool {
    ++trials;
    return eval(start.x + alpha * dir, trial);
  };
  auto armijo = [&](double alpha, double f) { return f <= f0 + cfg.c1 * alpha * d0; };
  auto curvature = [&](double d) { return std::abs(d) <= -cfg.c2 * d0; };

  double a_lo = 0.0, f_lo = f0, d_lo = d0;
  Point p_lo = start;
  double a_hi = 0.0, f_hi = 0.0, d_hi = 0.0;
  bool bracketed = false;

  double alpha = alpha0;
  double a_prev = 0.0, f_prev = f0, d_prev = d0;
  Point p_prev = start;
  while (trials < cfg.max_line_search_trials) {
    if (!try_step(alpha)) {
      out.status = SearchStatus::NonFinite;
      return out;
    }
    const double d = trial.g.dot(dir);
    if (!armijo(alpha, trial.f) || (trials > 1 && trial.f >= f_prev)) {
      a_lo = a_prev, f_lo = f_prev, d_lo = d_prev, p_lo = p_prev;
      a_hi = alpha, f_hi = trial.f, d_hi = d;
      bracketed = true;
      break;
    }
    if (curvature(d)) {
      out.status = SearchStatus::Ok;
      out.point = trial;
      return out;
    }
    if (d >= 0.0) {
      a_lo = alpha, f_lo = trial.f, d_lo = d, p_lo = trial;
      a_hi = a_prev, f_hi = f_prev, d_hi = d_prev;
      bracketed = true;
      break;
    }
    a_prev = alpha, f_prev = trial.f, d_prev = d, p_prev = trial;
    alpha *= 2.0;
  }

  if (bracketed) {
    while (trials < cfg.max_line_search_trials) {
      const double lo = std::min(a_lo, a_hi), hi = std::max(a_lo, a_hi);
      const double width = hi - lo;
      if (width <= 1e-16 * std::max(1.0, hi)) break;
      double a = cubic_minimizer(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi);
      if (!std::isfinite(a) || a < lo + 0.1 * width || a > hi - 0.1 * width) a = 0.5 * (a_lo + a_hi);
      if (!try_step(a)) {
        out.status = SearchStatus::NonFinite;
        return out;
      }
      const double d = trial.g.dot(dir);
      if (!armijo(a, trial.f) || trial.f >= f_lo) {
        a_hi = a, f_hi = trial.f, d_hi = d;
      } else {
        if (curvature(d)) {
          out.status = SearchStatus::Ok;
          out.point = trial;
          return out;
        }
        if (d * (a_hi - a_lo) >= 0.0) {
          a_hi = a_lo, f_hi = f_lo, d_hi = d_lo;
        }
        a_lo = a, f_lo = trial.f, d_lo = d, p_lo = trial;
      }
    }
  } else {
    p_lo = p_prev;
    a_lo = a_prev;
    f_lo = f_prev;
  }

  // Budget exhausted: fall back to the best point with sufficient decrease.
  if (a_lo > 0.0 && f_lo < f0 && armijo(a_lo, f_lo)) {
    out.status = SearchStatus::Ok;
    out.point = p_lo;
    return out;
  }
  out.status = SearchStatus::Stall;
  return out;
}

}  // namespace detail

/// L-BFGS with strong-Wolfe line search. A non-finite trial point discards
/// the curvature history, resets the Hessian approximation and resumes from
/// the last accepted iterate, consuming one restart. Accepted objective
/// values never increase, so the returned iterate is always the best seen.
inline OptResult minimize(const Objective& objective, const Eigen::VectorXd& x0, const LbfgsConfig& cfg = {}) {
  cfg.validate();
  detail::Evaluator eval{objective};
  detail::Point cur;
  if (!eval(x0, cur)) throw InvalidStart("objective is not finite at the starting point");

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  OptResult res;
  int consecutive_failures = 0;
  bool fresh = true;  // no curvature pairs since the start or the last reset

  auto clear_history = [&] {
    s_hist.clear();
    y_hist.clear();
    rho_hist.clear();
    fresh = true;
  };
  auto finish = [&](Termination why) {
    res.x_final = cur.x;
    res.f_final = cur.f;
    res.grad_norm_final = cur.g.lpNorm<Eigen::Infinity>();
    res.termination = why;
    res.evaluations = eval.count;
    return res;
  };

  for (res.iterations = 0; res.iterations < cfg.max_iterations; ++res.iterations) {
    const double gnorm_inf = cur.g.lpNorm<Eigen::Infinity>();
    if (gnorm_inf <= cfg.grad_tol) return finish(Termination::GradTol);

    // Two-loop recursion.
    Eigen::VectorXd dir = -cur.g;
    std::vector<double> alphas(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alphas[i] = rho_hist[i] * s_hist[i].dot(dir);
      dir -= alphas[i] * y_hist[i];
    }
    if (!s_hist.empty()) dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(dir);
      dir += (alphas[i] - beta) * s_hist[i];
    }
    if (!(cur.g.dot(dir) < 0.0) || !dir.allFinite()) {
      clear_history();
      dir = -cur.g;
    }

    double alpha0 = 1.0;
    if (s_hist.empty()) {
      alpha0 = std::min(1.0, 1.0 / cur.g.norm());
      // Repeated failures from a clean state: shrink instead of replaying the same trial.
      alpha0 *= std::pow(0.1, consecutive_failures);
    }

    detail::SearchOutcome ls = detail::strong_wolfe(eval, cur, dir, alpha0, cfg);
    if (ls.status == detail::SearchStatus::NonFinite) {
      if (res.restarts_used >= cfg.max_restarts) return finish(Termination::RestartsExhausted);
      ++res.restarts_used;
      consecutive_failures = fresh ? consecutive_failures + 1 : 0;
      clear_history();
      continue;
    }
    if (ls.status == detail::SearchStatus::Stall) {
      if (fresh) return finish(Termination::LineSearchStall);
      clear_history();
      continue;
    }

    consecutive_failures = 0;
    const double f_prev = cur.f;
    Eigen::VectorXd s = ls.point.x - cur.x;
    Eigen::VectorXd yv = ls.point.g - cur.g;
    cur = std::move(ls.point);
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      if (static_cast<int>(s_hist.size()) == cfg.memory_pairs) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      fresh = false;
    }
    if (cfg.f_rel_tol > 0.0) {
      const double scale = std::max({std::abs(f_prev), std::abs(cur.f), 1.0});
      if ((f_prev - cur.f) / scale <= cfg.f_rel_tol) {
        ++res.iterations;
        return finish(Termination::FunctionTol);
      }
    }
  }
  return finish(Termination::MaxIters);
}

}  // namespace autosgp

#endif  // AUTOSGP_OPTIMIZER_HPP
