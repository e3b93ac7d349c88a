#pragma once

#include "kdd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kdd {

//! Derivative-free minimization settings. max_evals = 0 means 500 per free
//! parameter.
struct OptimizerConfig {
  long max_evals = 0;
  double objective_tol = 1e-8;
  double simplex_init_scale = 0.1;
  int restarts = 2;
};

struct OptimResult {
  Matrix H;
  double value = std::numeric_limits<double>::infinity();
  long evaluations = 0;
  bool converged = false;
  bool improved = false;  // strictly better than the starting point
};

struct OptimizeError : std::runtime_error {
  OptimizeError(const std::string& msg, Matrix best_iterate, double best_value)
      : std::runtime_error(msg), best(std::move(best_iterate)), value(best_value) {}
  Matrix best;
  double value;
};

namespace detail {

//! Unconstrained parameterization of the PD cone: H = C C' with C lower
//! triangular and exponentiated diagonal.
inline Matrix theta_to_spd(const Vector& theta, Index d) {
  Matrix c = Matrix::Zero(d, d);
  Index k = 0;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j <= i; ++j, ++k) c(i, j) = (i == j) ? std::exp(theta[k]) : theta[k];
  return Matrix(c * c.transpose());
}

inline Vector spd_to_theta(const Matrix& h) {
  require_spd(h, "pd_optimize start");
  const Index d = h.rows();
  Eigen::LLT<Matrix> llt(Matrix(0.5 * (h + h.transpose())));
  const Matrix l = llt.matrixL();
  Vector theta(d * (d + 1) / 2);
  Index k = 0;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j <= i; ++j, ++k) theta[k] = (i == j) ? std::log(l(i, i)) : l(i, j);
  return theta;
}

struct NmState {
  Vector best_theta;
  double best_value = std::numeric_limits<double>::infinity();
  long evaluations = 0;
  bool converged = false;
};

//! One Nelder-Mead run; fn must already guard non-finite values (+inf).
inline void nelder_mead(const std::function<double(const Vector&)>& fn, const Vector& start,
                        double init_scale, double tol, long max_evals, NmState& st) {
  const Index m = start.size();
  std::vector<Vector> x(static_cast<std::size_t>(m) + 1, start);
  std::vector<double> f(static_cast<std::size_t>(m) + 1);
  auto eval = [&](const Vector& th) {
    ++st.evaluations;
    const double v = fn(th);
    if (v < st.best_value) {
      st.best_value = v;
      st.best_theta = th;
    }
    return v;
  };
  for (Index i = 0; i <= m; ++i) {
    if (i > 0) x[static_cast<std::size_t>(i)][i - 1] += init_scale * (1.0 + std::fabs(start[i - 1]));
    f[static_cast<std::size_t>(i)] = eval(x[static_cast<std::size_t>(i)]);
  }
  std::vector<std::size_t> ord(static_cast<std::size_t>(m) + 1);
  while (st.evaluations < max_evals) {
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
    const std::size_t ib = ord.front(), iw = ord.back(), is = ord[ord.size() - 2];
    if (std::isfinite(f[ib]) && f[iw] - f[ib] <= tol * (std::fabs(f[ib]) + 1e-12)) {
      st.converged = true;
      return;
    }
    Vector centroid = Vector::Zero(m);
    for (std::size_t k = 0; k + 1 < ord.size(); ++k) centroid += x[ord[k]];
    centroid /= static_cast<double>(m);
    const Vector xr = centroid + (centroid - x[iw]);
    const double fr = eval(xr);
    if (fr < f[ib]) {
      const Vector xe = centroid + 2.0 * (centroid - x[iw]);
      const double fe = eval(xe);
      if (fe < fr) {
        x[iw] = xe;
        f[iw] = fe;
      } else {
        x[iw] = xr;
        f[iw] = fr;
      }
    } else if (fr < f[is]) {
      x[iw] = xr;
      f[iw] = fr;
    } else {
      if (fr < f[iw]) {
        const Vector xc = centroid + 0.5 * (xr - centroid);
        const double fc = eval(xc);
        if (fc <= fr) {
          x[iw] = xc;
          f[iw] = fc;
        } else {
          for (std::size_t k = 1; k < ord.size(); ++k) {
            x[ord[k]] = x[ib] + 0.5 * (x[ord[k]] - x[ib]);
            f[ord[k]] = eval(x[ord[k]]);
          }
        }
      } else {
        const Vector xc = centroid + 0.5 * (x[iw] - centroid);
        const double fc = eval(xc);
        if (fc < f[iw]) {
          x[iw] = xc;
          f[iw] = fc;
        } else {
          for (std::size_t k = 1; k < ord.size(); ++k) {
            x[ord[k]] = x[ib] + 0.5 * (x[ord[k]] - x[ib]);
            f[ord[k]] = eval(x[ord[k]]);
          }
        }
      }
    }
  }
}

}  // namespace detail

//! Nelder-Mead over the Cholesky-log parameterization of the PD cone.
//! Iterates are PD by construction; the returned matrix never scores worse
//! than the starting point.
inline OptimResult pd_optimize(const std::function<double(const Matrix&)>& objective,
                               const Matrix& init, const OptimizerConfig& cfg = {}) {
  const Index d = init.rows();
  const Vector theta0 = detail::spd_to_theta(init);
  const Index m = theta0.size();
  const long budget = cfg.max_evals > 0 ? cfg.max_evals : 500 * static_cast<long>(m);

  auto guarded = [&](const Vector& th) {
    const Matrix h = detail::theta_to_spd(th, d);
    if (!h.allFinite()) return std::numeric_limits<double>::infinity();
    double v;
    try {
      v = objective(h);
    } catch (const std::domain_error&) {
      // numerically degenerate iterate; steer the simplex away
      return std::numeric_limits<double>::infinity();
    }
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  const double f0 = guarded(theta0);
  if (!std::isfinite(f0))
    throw OptimizeError("pd_optimize: objective not finite at the starting point", init, f0);

  detail::NmState st;
  st.best_theta = theta0;
  st.best_value = f0;
  st.evaluations = 1;
  double scale = cfg.simplex_init_scale;
  bool converged = false;
  for (int round = 0; round <= cfg.restarts && st.evaluations < budget; ++round) {
    const double before = st.best_value;
    detail::NmState run;
    run.best_theta = st.best_theta;
    run.best_value = st.best_value;
    run.evaluations = st.evaluations;
    detail::nelder_mead(guarded, st.best_theta, scale, cfg.objective_tol, budget, run);
    st = run;
    converged = run.converged;
    scale *= 0.5;
    if (before - st.best_value <= cfg.objective_tol * (std::fabs(before) + 1e-12) && round > 0) break;
  }

  OptimResult out;
  out.H = detail::theta_to_spd(st.best_theta, d);
  out.value = st.best_value;
  out.evaluations = st.evaluations;
  out.converged = converged;
  out.improved = st.best_value < f0;
  if (!out.improved) out.H = init;  // budget spent without progress: keep the start
  return out;
}

}  // namespace kdd
