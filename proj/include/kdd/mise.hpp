#pragma once

#include "kdd/estimator.hpp"
#include "kdd/gauss.hpp"
#include "kdd/mixture.hpp"
#include "kdd/optimizer.hpp"
#include "kdd/parallel.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace kdd {

//! Error figures attached to one estimate.
struct ErrorReport {
  double ise = 0.0;
  std::optional<double> mise;
  std::optional<double> amise;
  int order = 0;
  Index n = 0;
  Matrix H;
};

namespace detail {

inline double sign_of_order(int r) { return (r % 2 == 0) ? 1.0 : -1.0; }

//! sum_{i,j} w_i w_j eta_{2r}(mu_i - mu_j; Sigma_i + Sigma_j + shift).
inline double mixture_pair_sum(const NormalMixture& f, const Matrix& shift, int r) {
  const auto& cs = f.components();
  double acc = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i)
    for (std::size_t j = 0; j < cs.size(); ++j) {
      const Matrix cov = cs[i].cov + cs[j].cov + shift;
      LaplacianEta k(cov, r);
      acc += cs[i].weight * cs[j].weight * k(Vector(cs[i].mean - cs[j].mean));
    }
  return acc;
}

}  // namespace detail

//! Integrated variance / integrated squared bias split of the exact MISE.
struct MiseDecomposition {
  double iv = 0.0;
  double isb = 0.0;
  double total() const { return iv + isb; }
};

inline MiseDecomposition mise_decomposition(const NormalMixture& f, const Matrix& h, Index n,
                                            int r) {
  require_spd(h, "exact_mise");
  if (n < 1) throw std::invalid_argument("exact_mise: n >= 1");
  if (h.rows() != f.dim()) throw std::invalid_argument("exact_mise: dim mismatch");
  const double sign = detail::sign_of_order(r);
  const double nn = static_cast<double>(n);
  const double s_2h = detail::mixture_pair_sum(f, Matrix(2.0 * h), r);
  const double s_1h = detail::mixture_pair_sum(f, h, r);
  const double s_0 = detail::mixture_pair_sum(f, Matrix(Matrix::Zero(h.rows(), h.cols())), r);
  MiseDecomposition out;
  out.iv = iv_leading_term(h, nn, r) - sign * s_2h / nn;
  out.isb = sign * (s_2h - 2.0 * s_1h + s_0);
  return out;
}

//! Exact MISE_r(H) for a normal mixture target, all terms in closed form.
inline double exact_mise(const NormalMixture& f, const Matrix& h, Index n, int r) {
  return mise_decomposition(f, h, n, r).total();
}

//! Asymptotic MISE: variance term plus the squared-bias contraction of
//! psi_{2r+4} with vec I_{d^r} (x) (vec H)^{(x)2}, m_2(phi) = 1.
inline double amise(const NormalMixture& f, const Matrix& h, Index n, int r) {
  require_spd(h, "amise");
  if (n < 1) throw std::invalid_argument("amise: n >= 1");
  if (h.rows() != f.dim()) throw std::invalid_argument("amise: dim mismatch");
  const double sign = detail::sign_of_order(r);
  const Index d = f.dim();
  const Matrix id = Matrix::Identity(d, d);
  double bias = 0.0;
  const auto& cs = f.components();
  for (const auto& ci : cs)
    for (const auto& cj : cs)
      bias += ci.weight * cj.weight *
              eta(Vector(ci.mean - cj.mean), id, h, Matrix(ci.cov + cj.cov), r, 2);
  return iv_leading_term(h, static_cast<double>(n), r) + 0.25 * sign * bias;
}

//! Exact ISE_r between the kernel estimate and a normal mixture target, by
//! expanding the square into Gaussian cross-integrals.
inline double ise(const KdeModel& model, const NormalMixture& f) {
  if (model.data.cols() != f.dim()) throw std::invalid_argument("ise: dim mismatch");
  const int r = model.order;
  const double sign = detail::sign_of_order(r);
  const Matrix& h = model.bandwidth.matrix();
  const std::size_t n = static_cast<std::size_t>(model.data.rows());
  const double nn = static_cast<double>(n);

  // data-data block
  LaplacianEta k2h(Matrix(2.0 * h), r);
  Kahan total;
  auto make_acc = [] { return Kahan{}; };
  auto body = [&](std::size_t i, std::size_t j, Kahan& acc) {
    acc.add(k2h(Vector(model.data.row(static_cast<Index>(i)) - model.data.row(static_cast<Index>(j)))));
  };
  auto merge = [](Kahan& tot, const Kahan& part) { tot.add(part.value()); };
  for_each_pair_reduce(n, make_acc, body, merge, total);
  const double data_data = 2.0 * total.value() + nn * k2h(Vector::Zero(f.dim()));

  // data-component block
  double cross = 0.0;
  for (const auto& c : f.components()) {
    LaplacianEta k(Matrix(h + c.cov), r);
    Kahan acc;
    for (Index i = 0; i < model.data.rows(); ++i)
      acc.add(k(Vector(model.data.row(i).transpose() - c.mean)));
    cross += c.weight * acc.value();
  }

  const double comp_comp = detail::mixture_pair_sum(f, Matrix(Matrix::Zero(f.dim(), f.dim())), r);
  return sign * (data_data / (nn * nn) - 2.0 * cross / nn + comp_comp);
}

struct OracleResult {
  Matrix H;
  double mise = 0.0;
  double gradient_norm = 0.0;  // finite-difference diagnostic at the solution
  long evaluations = 0;
  bool converged = false;
};

//! OR bandwidth: minimizer of the exact MISE for a known mixture target.
//! Multi-start Nelder-Mead from the normal-reference matrix built on the true
//! mixture covariance, with a tightened tolerance.
inline OracleResult oracle_bandwidth(const NormalMixture& f, Index n, int r,
                                     OptimizerConfig cfg = {}) {
  if (n < 1) throw std::invalid_argument("oracle_bandwidth: n >= 1");
  const Index d = f.dim();
  cfg.objective_tol = std::min(cfg.objective_tol, 1e-10);
  const double expo = 2.0 / (static_cast<double>(d) + 2.0 * r + 4.0);
  const Matrix nr = std::pow(4.0 / (d + 2.0 * r + 2.0), expo) * f.covariance() *
                    std::pow(static_cast<double>(n), -expo);
  auto objective = [&](const Matrix& h) { return exact_mise(f, h, n, r); };

  OracleResult out;
  bool any = false;
  std::string last_error;
  for (double mult : {1.0, 0.5, 2.0}) {
    try {
      const OptimResult res = pd_optimize(objective, Matrix(mult * nr), cfg);
      if (!any || res.value < out.mise ||
          (res.value == out.mise && res.H.trace() < out.H.trace())) {
        out.H = res.H;
        out.mise = res.value;
        out.converged = res.converged;
      }
      out.evaluations += res.evaluations;
      any = true;
    } catch (const OptimizeError& e) {
      last_error = e.what();
    }
  }
  if (!any) throw OptimizeError("oracle_bandwidth: all starts failed: " + last_error, nr,
                                std::numeric_limits<double>::infinity());

  // gradient-norm diagnostic by central differences on vech H
  const double base = out.mise;
  double g2 = 0.0;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j <= i; ++j) {
      const double step = 1e-6 * (1.0 + std::fabs(out.H(i, j)));
      Matrix hp = out.H, hm = out.H;
      hp(i, j) += step;
      hp(j, i) = hp(i, j);
      hm(i, j) -= step;
      hm(j, i) = hm(i, j);
      double fp, fm;
      try {
        fp = exact_mise(f, hp, n, r);
        fm = exact_mise(f, hm, n, r);
      } catch (const std::domain_error&) {
        fp = base;
        fm = base;
      }
      const double gij = (fp - fm) / (2.0 * step);
      g2 += gij * gij;
    }
  out.gradient_norm = std::sqrt(g2);
  return out;
}

}  // namespace kdd
