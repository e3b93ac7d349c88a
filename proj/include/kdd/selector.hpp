#pragma once

#include "kdd/estimator.hpp"
#include "kdd/gauss.hpp"
#include "kdd/optimizer.hpp"
#include "kdd/parallel.hpp"
#include "kdd/tensor.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kdd {

enum class Method { NR, CV, PI, SCV, OR };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::NR: return "nr";
    case Method::CV: return "cv";
    case Method::PI: return "pi";
    case Method::SCV: return "scv";
    case Method::OR: return "or";
  }
  return "?";
}

struct SelectorConfig {
  Method method = Method::PI;
  int deriv_order = 0;
  int stages = 2;  // pilot stages for PI/SCV
  OptimizerConfig optimizer;
  bool prescale = true;
};

struct SelectorResult {
  Matrix H;
  double criterion_value = 0.0;
  std::vector<Matrix> pilots;  // highest stage first (PI/SCV)
  long evaluations = 0;
  bool converged = true;
  std::vector<std::string> warnings;
};

//! Selector internals materialize pair sums of derivative order up to
//! 2r+2m+2; allow more room than the general-purpose vector cap.
inline constexpr std::size_t kSelectorTensorCap = 20000000;

inline Matrix sample_covariance(const Matrix& data) {
  const Index n = data.rows();
  if (n < 2) throw std::invalid_argument("sample_covariance: need n >= 2");
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - mean;
  return Matrix(centered.transpose() * centered / static_cast<double>(n - 1));
}

namespace detail {

inline void check_selector_data(const Matrix& data, const char* what) {
  require_finite(data, what);
  const Index n = data.rows(), d = data.cols();
  if (n < d + 1)
    throw std::invalid_argument(std::string(what) + ": need n >= d+1 observations, got n=" +
                                std::to_string(n));
  const Matrix s = sample_covariance(data);
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()))
    throw std::domain_error(std::string(what) +
                            ": sample covariance is singular or near-singular; standardize or "
                            "jitter the data before selecting");
}

//! Multi-start wrapper: optimize from {1, 1/2, 2} x center, keep the lowest
//! criterion value, break ties by smaller trace.
inline OptimResult multi_start(const std::function<double(const Matrix&)>& objective,
                               const Matrix& center, const OptimizerConfig& cfg) {
  OptimResult best;
  long total_evals = 0;
  bool any = false;
  std::string last_error;
  for (double mult : {1.0, 0.5, 2.0}) {
    try {
      OptimResult res = pd_optimize(objective, Matrix(mult * center), cfg);
      total_evals += res.evaluations;
      if (!any || res.value < best.value ||
          (res.value == best.value && res.H.trace() < best.H.trace()))
        best = res;
      any = true;
    } catch (const OptimizeError& e) {
      last_error = e.what();
    }
  }
  if (!any)
    throw OptimizeError("all optimizer starts failed: " + last_error, center,
                        std::numeric_limits<double>::infinity());
  best.evaluations = total_evals;
  return best;
}

//! Standardize coordinatewise, run, and back-transform H and pilots by
//! D H~ D. prescale=true is exactly this code path, which is what the
//! pre-scaling identity test exercises.
template <class Fn>
SelectorResult with_prescale(const Matrix& data, bool prescale, Fn run) {
  if (!prescale) return run(data);
  const Index n = data.rows(), d = data.cols();
  if (n < 2) throw std::invalid_argument("selector: need n >= 2");
  const Eigen::RowVectorXd mean = data.colwise().mean();
  Eigen::RowVectorXd sd(d);
  for (Index j = 0; j < d; ++j) {
    const double v = (data.col(j).array() - mean[j]).square().sum() / static_cast<double>(n - 1);
    sd[j] = std::sqrt(v);
    if (!(sd[j] > 0.0))
      throw std::domain_error("selector: coordinate " + std::to_string(j) +
                              " is degenerate (zero variance)");
  }
  Matrix scaled = data.rowwise() - mean;
  for (Index j = 0; j < d; ++j) scaled.col(j) /= sd[j];
  SelectorResult res = run(scaled);
  const Matrix dmat = sd.transpose().asDiagonal();
  res.H = Matrix(dmat * res.H * dmat);
  for (auto& g : res.pilots) g = Matrix(dmat * g * dmat);
  return res;
}

}  // namespace detail

//! Normal reference: [4/(d+2r+2)]^{2/(d+2r+4)} S n^{-2/(d+2r+4)}.
inline Matrix nr_bandwidth(const Matrix& data, int r) {
  if (r < 0) throw std::invalid_argument("nr_bandwidth: r >= 0");
  const Index n = data.rows(), d = data.cols();
  if (n < 2) throw std::invalid_argument("nr_bandwidth: need n >= 2");
  const Matrix s = sample_covariance(data);
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()))
    throw std::domain_error(
        "nr_bandwidth: sample covariance is singular; standardize or jitter the data");
  const double expo = 2.0 / (static_cast<double>(d) + 2.0 * r + 4.0);
  return Matrix(std::pow(4.0 / (static_cast<double>(d) + 2.0 * r + 2.0), expo) * s *
                std::pow(static_cast<double>(n), -expo));
}

namespace detail {

//! CV criterion evaluator. Both kernels eta_{2r}(.; 2H) and eta_{2r}(.; H)
//! reduce to polynomials in the shared quadratic forms q_m = delta' H^{-m}
//! delta, and their exponentials satisfy exp(-q1/2) = exp(-q1/4)^2, so each
//! pair costs one exp.
class CvCriterion {
 public:
  CvCriterion(const Matrix& data, int r) : data_(data), r_(r) {
    if (data.rows() < 2) throw std::invalid_argument("cv_criterion: need n >= 2");
    if (r < 0 || r > 12) throw std::invalid_argument("cv_criterion: unsupported order");
    if (data.cols() > 8) throw std::invalid_argument("cv_criterion: d > 8 not supported");
  }

  double operator()(const Matrix& h) const {
    const Index d = data_.cols();
    if (h.rows() != d || h.cols() != d) throw std::invalid_argument("cv_criterion: dim mismatch");
    const std::size_t n = static_cast<std::size_t>(data_.rows());
    const double nn = static_cast<double>(n);
    Eigen::LLT<Matrix> llt(Matrix(0.5 * (h + h.transpose())));
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    double log_det = 0.0;
    for (Index i = 0; i < d; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));

    // powers of H^{-1} and their traces
    std::vector<Matrix> pow(static_cast<std::size_t>(r_) + 2);
    pow[0] = Matrix::Identity(d, d);
    pow[1] = llt.solve(Matrix::Identity(d, d));
    for (int m = 2; m <= r_ + 1; ++m) pow[static_cast<std::size_t>(m)] = Matrix(pow[m - 1] * pow[1]);
    double tr[16] = {0.0};
    for (int k = 1; k <= r_; ++k) tr[k] = pow[static_cast<std::size_t>(k)].trace();

    const double norm2 = std::exp(-0.5 * (d * std::log(2.0 * M_PI) + d * std::log(2.0) + log_det));
    const double norm1 = std::exp(-0.5 * (d * std::log(2.0 * M_PI) + log_det));
    double rfact = 1.0;
    for (int k = 2; k <= r_; ++k) rfact *= k;

    // trace parts of the Bell coefficients for covariance c*H, c in {2, 1}
    double gt2[16], gt1[16];
    for (int k = 1; k <= r_; ++k) {
      double sgn = (k % 2 == 0) ? 1.0 : -1.0;
      const double base = 0.5 * sgn * std::pow(2.0, k) * tr[k] / k;
      gt2[k] = base * std::pow(2.0, -k);
      gt1[k] = base;
    }

    const int r = r_;
    auto eta_pair = [&](const double* q, double e_quarter, double& out2, double& out1) {
      // q[m] = delta' H^{-m} delta, m = 1..r+1; e_quarter = exp(-q[1]/4)
      const double phi2 = norm2 * e_quarter;
      const double phi1 = norm1 * e_quarter * e_quarter;
      if (r == 0) {
        out2 = phi2;
        out1 = phi1;
        return;
      }
      double g2[16], g1[16];
      for (int k = 1; k <= r; ++k) {
        g2[k] = gt2[k];
        g1[k] = gt1[k];
      }
      double sgn = 1.0;  // (-2)^k
      for (int k = 0; k < r; ++k) {
        const double qv = q[k + 2];
        g2[k + 1] += sgn * std::pow(2.0, -(k + 2)) * qv;
        g1[k + 1] += sgn * qv;
        sgn *= -2.0;
      }
      double e2[17], e1[17];
      e2[0] = e1[0] = 1.0;
      for (int m = 1; m <= r; ++m) {
        double a2 = 0.0, a1 = 0.0;
        for (int k = 1; k <= m; ++k) {
          a2 += k * g2[k] * e2[m - k];
          a1 += k * g1[k] * e1[m - k];
        }
        e2[m] = a2 / m;
        e1[m] = a1 / m;
      }
      out2 = phi2 * rfact * e2[r];
      out1 = phi1 * rfact * e1[r];
    };

    struct Acc {
      Kahan a, b;
      Vector delta, work;
    };
    Acc total;
    auto make_acc = [&] {
      Acc acc;
      acc.delta.resize(d);
      acc.work.resize(d);
      return acc;
    };
    auto body = [&](std::size_t i, std::size_t j, Acc& acc) {
      acc.delta = data_.row(static_cast<Index>(i)) - data_.row(static_cast<Index>(j));
      double q[16];
      acc.work = acc.delta;
      for (int m = 1; m <= r + 1; ++m) {
        // work <- H^{-1} work, q[m] = delta' work
        const double* inv = pow[1].data();
        double tmp[8];
        for (Index a = 0; a < d; ++a) {
          double s = 0.0;
          for (Index b = 0; b < d; ++b) s += inv[a + b * d] * acc.work[b];
          tmp[a] = s;
        }
        double qv = 0.0;
        for (Index a = 0; a < d; ++a) {
          acc.work[a] = tmp[a];
          qv += acc.delta[a] * tmp[a];
        }
        q[m] = qv;
      }
      const double e_quarter = std::exp(-0.25 * q[1]);
      if (e_quarter == 0.0) return;
      double v2, v1;
      eta_pair(q, e_quarter, v2, v1);
      acc.a.add(v2);
      acc.b.add(v1);
    };
    auto merge = [](Acc& tot, const Acc& part) {
      tot.a.add(part.a.value());
      tot.b.add(part.b.value());
    };
    for_each_pair_reduce(n, make_acc, body, merge, total);

    double q0[16] = {0.0};
    double diag2, diag1;
    eta_pair(q0, 1.0, diag2, diag1);
    const double sum_all = 2.0 * total.a.value() + nn * diag2;
    const double sum_off = 2.0 * total.b.value();
    const double sign = (r % 2 == 0) ? 1.0 : -1.0;
    return sign * (sum_all / (nn * nn) - 2.0 * sum_off / (nn * (nn - 1.0)));
  }

 private:
  const Matrix& data_;
  int r_;
};

}  // namespace detail

//! CV_r(H) = (-1)^r { n^{-2} sum_{i,j} eta_{2r}(X_i-X_j; 2H)
//!                    - 2 [n(n-1)]^{-1} sum_{i != j} eta_{2r}(X_i-X_j; H) },
//! diagonal terms included in the first sum exactly as written.
inline double cv_criterion(const Matrix& data, const Matrix& h, int r) {
  if (data.cols() != h.rows()) throw std::invalid_argument("cv_criterion: dim mismatch");
  require_spd(h, "cv_criterion");
  return detail::CvCriterion(data, r)(h);
}

//! Minimize CV_r over the PD cone, multi-start from {1, 1/2, 2} x NR.
inline SelectorResult cv_select(const Matrix& data, int r, const OptimizerConfig& cfg = {},
                                bool prescale = true) {
  return detail::with_prescale(data, prescale, [&](const Matrix& x) {
    detail::check_selector_data(x, "cv_select");
    SelectorResult res;
    if (x.rows() < 4) res.warnings.push_back("cv_select: n < 4 gives a very noisy criterion");
    const Matrix start = nr_bandwidth(x, r);
    auto objective = [&](const Matrix& h) { return cv_criterion(x, h, r); };
    const OptimResult opt = detail::multi_start(objective, start, cfg);
    res.H = opt.H;
    res.criterion_value = opt.value;
    res.evaluations = opt.evaluations;
    res.converged = opt.converged;
    return res;
  });
}

namespace detail {

struct PilotTerms {
  double t1 = 0.0, t2 = 0.0, t3 = 0.0;
  double pi() const { return t1 + t2 + t3; }
  double scv(Index d) const {
    return std::pow(2.0, -static_cast<double>(d)) * t1 +
           std::pow(2.0, -0.5 * static_cast<double>(d) + 1.0) * t2 + 4.0 * t3;
  }
};

//! One pilot stage of the plug-in pipeline: with the next-stage pilot fixed,
//! the order-(2s+2) derivative pair sums are accumulated once and every
//! objective evaluation is a pair of contractions.
class PilotStage {
 public:
  PilotStage(const Matrix& data, const Matrix& sigma_next, int r, int k)
      : d_(data.cols()), n_(static_cast<double>(data.rows())), s_(r + k + 1) {
    if (k < 1) throw std::invalid_argument("PilotStage: stage index k >= 1");
    require_spd(sigma_next, "PilotStage pilot");
    of_ = odd_factorial(2 * s_);
    const int order = 2 * s_ + 2;
    t_full_ = ::kdd::detail::DerivSum(sigma_next, order).all_pairs(data, kSelectorTensorCap);
    const Vector ci = kron_power(vec(Matrix::Identity(d_, d_)), s_, kSelectorTensorCap);
    seg_ = ci.size();
    t_identity_.resize(d_ * d_);
    for (Index p = 0; p < d_ * d_; ++p) t_identity_[p] = t_full_.segment(p * seg_, seg_).dot(ci);
  }

  PilotTerms terms(const Matrix& g) const {
    Eigen::LLT<Matrix> llt(Matrix(0.5 * (g + g.transpose())));
    if (llt.info() != Eigen::Success)
      return PilotTerms{std::numeric_limits<double>::infinity(), 0.0, 0.0};
    double log_det = 0.0;
    for (Index i = 0; i < d_; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    const Matrix ginv = llt.solve(Matrix::Identity(d_, d_));

    PilotTerms t;
    t.t1 = std::pow(n_, -2.0) * std::exp(-log_det) * std::pow(2.0 * M_PI, -static_cast<double>(d_)) *
           of_ * chi_square_moment(Matrix(ginv * ginv), s_);

    const Vector vg = vec(g);
    const Vector cb = kron_power(vec(ginv), s_, kSelectorTensorCap);
    double sum_b = 0.0;
    for (Index p = 0; p < d_ * d_; ++p) sum_b += vg[p] * t_full_.segment(p * seg_, seg_).dot(cb);
    const double sign = (s_ % 2 == 0) ? 1.0 : -1.0;
    t.t2 = sign * std::pow(2.0 * M_PI, -0.5 * d_) * of_ * std::exp(-0.5 * log_det) *
           std::pow(n_, -3.0) * sum_b;

    const double sum_i = vg.dot(t_identity_);
    t.t3 = 0.25 * std::pow(n_, -4.0) * sum_i * sum_i;
    return t;
  }

 private:
  Index d_;
  double n_;
  int s_;
  double of_ = 1.0;
  Vector t_full_;
  Vector t_identity_;
  Index seg_ = 1;
};

//! Final plug-in criterion with the stage-1 pilot frozen:
//! PI_r(H) = n^{-1}|H|^{-1/2} 2^{-(d+r)} pi^{-d/2} E[(W'W)^r | W~N(0,H^{-1})]
//!         + (-1)^r (2n)^{-2} sum_{i,j} [(vec'H)^{(x)2} (x) (vec'I)^{(x)r}]
//!                                       D^{(x)2r+4} phi_{G1}(X_i - X_j),
//! i.e. the plugged-in psi_{2r+4} contraction of the asymptotic squared bias.
class PiCriterion {
 public:
  PiCriterion(const Matrix& data, const Matrix& g1, int r)
      : d_(data.cols()), n_(static_cast<double>(data.rows())), r_(r) {
    const Vector t_full =
        ::kdd::detail::DerivSum(g1, 2 * r + 4).all_pairs(data, kSelectorTensorCap);
    const Vector ci = kron_power(vec(Matrix::Identity(d_, d_)), r_, kSelectorTensorCap);
    const Index seg = ci.size();
    t_hh_.resize(d_ * d_ * d_ * d_);
    for (Index p = 0; p < t_hh_.size(); ++p) t_hh_[p] = t_full.segment(p * seg, seg).dot(ci);
  }

  double operator()(const Matrix& h) const {
    const double sign = (r_ % 2 == 0) ? 1.0 : -1.0;
    const Vector vh = vec(h);
    double bias = 0.0;
    Index p = 0;
    for (Index a = 0; a < d_ * d_; ++a)
      for (Index b = 0; b < d_ * d_; ++b, ++p) bias += vh[a] * vh[b] * t_hh_[p];
    return iv_leading_term(h, n_, r_) + sign * bias / (4.0 * n_ * n_);
  }

 private:
  Index d_;
  double n_;
  int r_;
  Vector t_hh_;  // trailing identity contraction of the order-(2r+4) pair sum
};

inline Matrix pilot_nr_init(const Matrix& s, double n, Index d, int r, int m) {
  const double expo = 2.0 / (2.0 * r + 2.0 * m + static_cast<double>(d) + 4.0);
  return Matrix(std::pow(2.0 / (2.0 * r + 2.0 * m + static_cast<double>(d) + 2.0), expo) * 2.0 * s *
                std::pow(n, -expo));
}

//! Final SCV criterion with the pilot frozen; the H-independent
//! eta_{2r}(.; 2G) pair sum is accumulated once.
class ScvCriterion {
 public:
  ScvCriterion(const Matrix& data, const Matrix& g, int r)
      : data_(data), g_(g), r_(r), n_(static_cast<double>(data.rows())) {
    LaplacianEta kc(Matrix(2.0 * g), r);
    Kahan total;
    auto make_acc = [&] { return Kahan{}; };
    auto body = [&](std::size_t i, std::size_t j, Kahan& acc) {
      acc.add(kc(Vector(data_.row(static_cast<Index>(i)) - data_.row(static_cast<Index>(j)))));
    };
    auto merge = [](Kahan& tot, const Kahan& part) { tot.add(part.value()); };
    for_each_pair_reduce(static_cast<std::size_t>(data.rows()), make_acc, body, merge, total);
    sum_2g_ = 2.0 * total.value() + n_ * kc(Vector::Zero(data.cols()));
  }

  double operator()(const Matrix& h) const {
    LaplacianEta ka(Matrix(2.0 * h + 2.0 * g_), r_);
    LaplacianEta kb(Matrix(h + 2.0 * g_), r_);
    struct Acc {
      Kahan a, b;
      Vector delta;
    };
    Acc total;
    auto make_acc = [&] {
      Acc acc;
      acc.delta.resize(data_.cols());
      return acc;
    };
    auto body = [&](std::size_t i, std::size_t j, Acc& acc) {
      acc.delta = data_.row(static_cast<Index>(i)) - data_.row(static_cast<Index>(j));
      acc.a.add(ka(acc.delta));
      acc.b.add(kb(acc.delta));
    };
    auto merge = [](Acc& tot, const Acc& part) {
      tot.a.add(part.a.value());
      tot.b.add(part.b.value());
    };
    for_each_pair_reduce(static_cast<std::size_t>(data_.rows()), make_acc, body, merge, total);
    const Vector zero = Vector::Zero(data_.cols());
    const double pair_sum = (2.0 * total.a.value() + n_ * ka(zero)) -
                            2.0 * (2.0 * total.b.value() + n_ * kb(zero)) + sum_2g_;
    const double sign = (r_ % 2 == 0) ? 1.0 : -1.0;
    return iv_leading_term(h, n_, r_) + sign * pair_sum / (n_ * n_);
  }

 private:
  const Matrix& data_;
  Matrix g_;
  int r_;
  double n_;
  double sum_2g_ = 0.0;
};

}  // namespace detail

//! omega-hat pilot objective of stage k (with the next-stage pilot G_next
//! held fixed), as the three printed terms. One-shot evaluation; the
//! selectors reuse the stage machinery across optimizer calls.
inline double pi_pilot_objective(const Matrix& data, const Matrix& g, int k, int r,
                                 const Matrix& g_next) {
  require_spd(g, "pi_pilot_objective");
  detail::PilotStage stage(data, g_next, r, k);
  return stage.terms(g).pi();
}

//! SCV variant: the same three terms scaled by 2^{-d}, 2^{-d/2+1}, 4.
inline double scv_pilot_objective(const Matrix& data, const Matrix& g, int k, int r,
                                  const Matrix& g_next) {
  require_spd(g, "scv_pilot_objective");
  detail::PilotStage stage(data, g_next, r, k);
  return stage.terms(g).scv(data.cols());
}

//! Individual pilot-objective terms, for the termwise scaling identity.
inline detail::PilotTerms pilot_objective_terms(const Matrix& data, const Matrix& g, int k, int r,
                                                const Matrix& g_next) {
  require_spd(g, "pilot_objective_terms");
  detail::PilotStage stage(data, g_next, r, k);
  return stage.terms(g);
}

//! SCV_r(H) with pilot G: variance term plus the three-kernel pair sum
//! (diagonal included unless detached for the G -> 0 degeneration check).
inline double scv_criterion(const Matrix& data, const Matrix& h, const Matrix& g, int r,
                            bool include_diagonal = true) {
  if (data.rows() < 2) throw std::invalid_argument("scv_criterion: need n >= 2");
  if (data.cols() != h.rows() || data.cols() != g.rows())
    throw std::invalid_argument("scv_criterion: dim mismatch");
  const std::size_t n = static_cast<std::size_t>(data.rows());
  const double nn = static_cast<double>(n);
  LaplacianEta ka(Matrix(2.0 * h + 2.0 * g), r);
  LaplacianEta kb(Matrix(h + 2.0 * g), r);
  LaplacianEta kc(Matrix(2.0 * g), r);

  struct Acc {
    Kahan sum;
    Vector delta;
  };
  Acc total;
  auto make_acc = [&] {
    Acc acc;
    acc.delta.resize(data.cols());
    return acc;
  };
  auto body = [&](std::size_t i, std::size_t j, Acc& acc) {
    acc.delta = data.row(static_cast<Index>(i)) - data.row(static_cast<Index>(j));
    acc.sum.add(ka(acc.delta) - 2.0 * kb(acc.delta) + kc(acc.delta));
  };
  auto merge = [](Acc& tot, const Acc& part) { tot.sum.add(part.sum.value()); };
  for_each_pair_reduce(n, make_acc, body, merge, total);

  double pair_sum = 2.0 * total.sum.value();
  if (include_diagonal) {
    const Vector zero = Vector::Zero(data.cols());
    pair_sum += nn * (ka(zero) - 2.0 * kb(zero) + kc(zero));
  }
  const double sign = (r % 2 == 0) ? 1.0 : -1.0;
  return iv_leading_term(h, nn, r) + sign * pair_sum / (nn * nn);
}

namespace detail {

template <bool ScvScaled>
SelectorResult plugin_pipeline(const Matrix& x, int r, int stages, const OptimizerConfig& cfg) {
  const char* what = ScvScaled ? "scv_select" : "pi_select";
  check_selector_data(x, what);
  if (stages < 1) throw std::invalid_argument(std::string(what) + ": stages >= 1");
  const Index d = x.cols();
  const double n = static_cast<double>(x.rows());
  const Matrix s = sample_covariance(x);

  SelectorResult res;
  Matrix g = pilot_nr_init(s, n, d, r, stages);
  res.pilots.push_back(g);

  for (int k = stages - 1; k >= 1; --k) {
    try {
      PilotStage stage(x, g, r, k);
      auto objective = [&](const Matrix& cand) {
        return ScvScaled ? stage.terms(cand).scv(d) : stage.terms(cand).pi();
      };
      const OptimResult opt = multi_start(objective, g, cfg);
      res.evaluations += opt.evaluations;
      if (!opt.converged) res.converged = false;
      g = opt.H;
      res.pilots.push_back(g);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(what) + ": pilot stage " + std::to_string(k) +
                               " failed: " + e.what());
    }
  }

  try {
    const Matrix start = nr_bandwidth(x, r);
    OptimResult opt;
    if constexpr (ScvScaled) {
      ScvCriterion crit(x, g, r);
      auto objective = [&](const Matrix& h) { return crit(h); };
      opt = multi_start(objective, start, cfg);
    } else {
      PiCriterion crit(x, g, r);
      auto objective = [&](const Matrix& h) { return crit(h); };
      opt = multi_start(objective, start, cfg);
    }
    res.evaluations += opt.evaluations;
    if (!opt.converged) res.converged = false;
    res.H = opt.H;
    res.criterion_value = opt.value;
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(what) + ": final stage failed: " + e.what());
  }
  return res;
}

}  // namespace detail

//! m-stage plug-in selector for the r-th derivative.
inline SelectorResult pi_select(const Matrix& data, int r, int stages = 2,
                                const OptimizerConfig& cfg = {}, bool prescale = true) {
  return detail::with_prescale(
      data, prescale, [&](const Matrix& x) { return detail::plugin_pipeline<false>(x, r, stages, cfg); });
}

//! m-stage smoothed cross validation selector for the r-th derivative.
inline SelectorResult scv_select(const Matrix& data, int r, int stages = 2,
                                 const OptimizerConfig& cfg = {}, bool prescale = true) {
  return detail::with_prescale(
      data, prescale, [&](const Matrix& x) { return detail::plugin_pipeline<true>(x, r, stages, cfg); });
}

//! Data-driven dispatch. OR needs the target density and lives in the harness.
inline SelectorResult select_bandwidth(const Matrix& data, const SelectorConfig& cfg) {
  switch (cfg.method) {
    case Method::NR: {
      SelectorResult res;
      res.H = nr_bandwidth(data, cfg.deriv_order);
      res.criterion_value = 0.0;
      return res;
    }
    case Method::CV:
      return cv_select(data, cfg.deriv_order, cfg.optimizer, cfg.prescale);
    case Method::PI:
      return pi_select(data, cfg.deriv_order, cfg.stages, cfg.optimizer, cfg.prescale);
    case Method::SCV:
      return scv_select(data, cfg.deriv_order, cfg.stages, cfg.optimizer, cfg.prescale);
    case Method::OR:
      throw std::invalid_argument("select_bandwidth: the oracle needs a target mixture");
  }
  throw std::invalid_argument("select_bandwidth: unknown method");
}

}  // namespace kdd
