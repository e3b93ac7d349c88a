#pragma once

#include "kdd/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace kdd {

inline constexpr double kLogUnderflow = -700.0;

//! Mean/covariance pair with the validation the rest of the library relies on.
struct GaussianParam {
  Vector mean;
  Matrix cov;
  GaussianParam(Vector m, Matrix c) : mean(std::move(m)), cov(std::move(c)) {
    require_finite(cov, "GaussianParam");
    if (mean.size() != cov.rows()) throw std::invalid_argument("GaussianParam: dim mismatch");
    require_spd(cov, "GaussianParam");
  }
};

//! Stacked r-th derivative of a scalar field on R^d: values has length d^r and
//! is invariant under the order-r symmetrizer (partial derivatives commute).
struct DerivVector {
  Index dim = 0;
  int order = 0;
  Vector values;
};

//! Cholesky-backed N(0, Sigma) evaluation state shared by the derivative code.
class GaussFactor {
 public:
  explicit GaussFactor(const Matrix& sigma) : sigma_(sigma) {
    require_finite(sigma, "GaussFactor");
    if (sigma.rows() != sigma.cols()) throw std::invalid_argument("GaussFactor: square matrix required");
    if (!is_symmetric(sigma)) throw std::domain_error("GaussFactor: covariance not symmetric");
    const Matrix sym = 0.5 * (sigma + sigma.transpose());
    llt_.compute(sym);
    if (llt_.info() != Eigen::Success) throw std::domain_error("GaussFactor: covariance not positive definite");
    inv_ = llt_.solve(Matrix::Identity(sigma.rows(), sigma.cols()));
    double ld = 0.0;
    for (Index i = 0; i < sigma.rows(); ++i) ld += 2.0 * std::log(llt_.matrixL()(i, i));
    log_det_ = ld;
    log_norm_ = -0.5 * (static_cast<double>(sigma.rows()) * std::log(2.0 * M_PI) + log_det_);
  }

  Index dim() const { return sigma_.rows(); }
  const Matrix& cov() const { return sigma_; }
  const Matrix& inverse() const { return inv_; }
  double log_det() const { return log_det_; }

  //! x' Sigma^{-1} x without Eigen temporaries; hot in the pair loops.
  double quad_form(const Vector& x) const {
    const Index d = sigma_.rows();
    const double* inv = inv_.data();  // column-major, symmetric
    double acc = 0.0;
    for (Index j = 0; j < d; ++j) {
      double col = 0.0;
      for (Index i = 0; i < d; ++i) col += inv[j * d + i] * x[i];
      acc += col * x[j];
    }
    return acc;
  }

  double log_density(const Vector& x) const { return log_norm_ - 0.5 * quad_form(x); }

  //! Density with the far-tail guard: exponents below kLogUnderflow return 0.
  double density(const Vector& x) const {
    const double lp = log_density(x);
    return lp < kLogUnderflow ? 0.0 : std::exp(lp);
  }

 private:
  Matrix sigma_, inv_;
  Eigen::LLT<Matrix> llt_;
  double log_det_ = 0.0, log_norm_ = 0.0;
};

namespace detail {

//! Multi-index bookkeeping for derivatives of order <= max_order in dimension d.
//! Values of D^{(x)m} phi are stored per multiset of differentiation indices
//! (size C(m+d-1, d-1)) instead of per index tuple (size d^m); the recursion
//!   value(b + e_i) = -u_i value(b) - sum_l b_l inv(i,l) value(b - e_l)
//! with u = Sigma^{-1} x fills orders upward. Tables depend only on (d, order).
class MultisetTable {
 public:
  struct Term {
    std::int32_t grandparent;
    std::int32_t l;
    double coeff;  // multiplicity b_l
  };
  struct Row {
    std::int32_t i;        // first nonzero coordinate of the multiset
    std::int32_t parent;   // rank of b = alpha - e_i at order m-1
    std::int32_t term_begin, term_end;
  };

  MultisetTable(Index d, int max_order) : d_(d), max_order_(max_order) {
    counts_.resize(max_order + 1);
    rows_.resize(max_order + 1);
    terms_.resize(max_order + 1);
    ranks_.resize(max_order + 1);
    for (int m = 0; m <= max_order; ++m) enumerate(m);
    for (int m = 2; m <= max_order; ++m) build_rows(m);
  }

  Index dim() const { return d_; }
  int max_order() const { return max_order_; }
  std::size_t count(int m) const { return counts_[m].size(); }
  const std::vector<std::vector<int>>& multisets(int m) const { return counts_[m]; }
  const std::vector<Row>& rows(int m) const { return rows_[m]; }
  const std::vector<Term>& terms(int m) const { return terms_[m]; }

  int rank(int m, const std::vector<int>& alpha) const {
    auto it = ranks_[m].find(alpha);
    if (it == ranks_[m].end()) throw std::logic_error("MultisetTable: rank lookup failed");
    return it->second;
  }

  //! Map from flat tuple index (first coordinate slowest) to multiset rank.
  std::vector<std::int32_t> tuple_ranks(int m, std::size_t max_entries = kMaxTensorEntries) const {
    const std::size_t len = checked_pow(d_, m, max_entries);
    std::vector<std::int32_t> out(len);
    std::vector<int> digits(m, 0), alpha(d_, 0);
    if (m == 0) {
      out[0] = 0;
      return out;
    }
    alpha[0] = m;
    for (std::size_t idx = 0; idx < len; ++idx) {
      out[idx] = static_cast<std::int32_t>(rank(m, alpha));
      // odometer step on digits, updating counts incrementally
      for (int t = m - 1; t >= 0; --t) {
        alpha[digits[t]] -= 1;
        digits[t] += 1;
        if (digits[t] < d_) {
          alpha[digits[t]] += 1;
          break;
        }
        digits[t] = 0;
        alpha[0] += 1;
      }
    }
    return out;
  }

 private:
  void enumerate(int m) {
    std::vector<int> alpha(d_, 0);
    alpha[0] = m;
    while (true) {
      ranks_[m].emplace(alpha, static_cast<int>(counts_[m].size()));
      counts_[m].push_back(alpha);
      // next composition: move one unit right from the first nonzero part,
      // returning everything before it to the front
      int k = -1;
      for (int t = 0; t + 1 < d_; ++t)
        if (alpha[t] > 0) { k = t; break; }
      if (k < 0) break;
      const int v = alpha[k];
      alpha[k] = 0;
      alpha[k + 1] += 1;
      alpha[0] = v - 1;
    }
  }

  void build_rows(int m) {
    rows_[m].reserve(counts_[m].size());
    for (const auto& alpha : counts_[m]) {
      Row row{};
      int i = 0;
      while (alpha[i] == 0) ++i;
      row.i = i;
      std::vector<int> beta = alpha;
      beta[i] -= 1;
      row.parent = rank(m - 1, beta);
      row.term_begin = static_cast<std::int32_t>(terms_[m].size());
      for (int l = 0; l < d_; ++l) {
        if (beta[l] == 0) continue;
        std::vector<int> gamma = beta;
        gamma[l] -= 1;
        terms_[m].push_back(Term{static_cast<std::int32_t>(rank(m - 2, gamma)),
                                 static_cast<std::int32_t>(l), static_cast<double>(beta[l])});
      }
      row.term_end = static_cast<std::int32_t>(terms_[m].size());
      rows_[m].push_back(row);
    }
  }

  Index d_;
  int max_order_;
  std::vector<std::vector<std::vector<int>>> counts_;
  std::vector<std::map<std::vector<int>, int>> ranks_;
  std::vector<std::vector<Row>> rows_;
  std::vector<std::vector<Term>> terms_;
};

}  // namespace detail

//! Workspace for HermiteEvaluator::eval, reusable across calls and private to
//! one thread.
struct HermiteWorkspace {
  std::vector<std::vector<double>> vals;  // per order, multiset-ranked
};

//! Evaluates all derivative orders 0..max_order of phi_Sigma at a point, in
//! multiset storage. Instances are immutable after construction and safe to
//! share across threads (each thread brings its own workspace).
class HermiteEvaluator {
 public:
  HermiteEvaluator(const Matrix& sigma, int max_order)
      : gf_(sigma), table_(sigma.rows(), max_order) {
    const auto& inv = gf_.inverse();
    // fold Sigma^{-1}(i,l) into the recursion coefficients
    folded_.resize(max_order + 1);
    for (int m = 2; m <= max_order; ++m) {
      const auto& rows = table_.rows(m);
      const auto& terms = table_.terms(m);
      folded_[m].resize(terms.size());
      for (const auto& row : rows)
        for (int t = row.term_begin; t < row.term_end; ++t)
          folded_[m][t] = terms[t].coeff * inv(row.i, terms[t].l);
    }
  }

  const GaussFactor& factor() const { return gf_; }
  const detail::MultisetTable& table() const { return table_; }

  void eval(const Vector& x, HermiteWorkspace& ws) const {
    const int M = table_.max_order();
    const Index d = gf_.dim();
    if (ws.vals.size() != static_cast<std::size_t>(M) + 1 || ws.vals[M].size() != table_.count(M)) {
      ws.vals.assign(M + 1, {});
      for (int m = 0; m <= M; ++m) ws.vals[m].resize(table_.count(m));
    }
    const double phi = gf_.density(x);
    ws.vals[0][0] = phi;
    if (M == 0) return;
    const Vector u = gf_.inverse() * x;
    if (phi == 0.0) {
      for (int m = 1; m <= M; ++m) std::fill(ws.vals[m].begin(), ws.vals[m].end(), 0.0);
      return;
    }
    for (Index i = 0; i < d; ++i) ws.vals[1][static_cast<std::size_t>(i)] = -u[i] * phi;
    // order 1 multisets are e_0, e_1, ... in enumeration order
    for (int m = 2; m <= M; ++m) {
      const auto& rows = table_.rows(m);
      const auto& terms = table_.terms(m);
      const auto& w = folded_[m];
      const auto& prev = ws.vals[m - 1];
      const auto& prev2 = ws.vals[m - 2];
      auto& cur = ws.vals[m];
      for (std::size_t a = 0; a < rows.size(); ++a) {
        const auto& row = rows[a];
        double v = -u[row.i] * prev[row.parent];
        for (int t = row.term_begin; t < row.term_end; ++t)
          v -= w[t] * prev2[terms[t].grandparent];
        cur[a] = v;
      }
    }
  }

 private:
  GaussFactor gf_;
  detail::MultisetTable table_;
  std::vector<std::vector<double>> folded_;
};

//! D^{(x)r} phi_Sigma(x) as a full d^r vector. Flat index of the tuple
//! (t_1,...,t_r) is sum t_k d^{r-k}; the value at a tuple is the mixed partial
//! with respect to those coordinates, so the vector is symmetrizer-invariant.
inline DerivVector dnorm_deriv(const Vector& x, const Matrix& sigma, int r,
                               std::size_t max_entries = kMaxTensorEntries) {
  if (r < 0) throw std::invalid_argument("dnorm_deriv: r >= 0");
  if (x.size() != sigma.rows()) throw std::invalid_argument("dnorm_deriv: dim mismatch");
  const std::size_t len = checked_pow(sigma.rows(), r, max_entries);
  HermiteEvaluator ev(sigma, r);
  HermiteWorkspace ws;
  ev.eval(x, ws);
  const auto ranks = ev.table().tuple_ranks(r, max_entries);
  DerivVector out;
  out.dim = sigma.rows();
  out.order = r;
  out.values.resize(static_cast<Index>(len));
  for (std::size_t idx = 0; idx < len; ++idx) out.values[static_cast<Index>(idx)] = ws.vals[r][ranks[idx]];
  return out;
}

namespace detail {

//! Polynomials in (a, b) truncated to degrees (na-1, nb-1); the ring behind
//! the eta generating function.
struct TruncPoly2 {
  int na = 1, nb = 1;
  std::vector<double> c;  // row-major [ia*nb + ib]

  TruncPoly2() : c(1, 0.0) {}
  TruncPoly2(int na_, int nb_) : na(na_), nb(nb_), c(static_cast<std::size_t>(na_) * nb_, 0.0) {}

  double& at(int ia, int ib) { return c[static_cast<std::size_t>(ia) * nb + ib]; }
  double at(int ia, int ib) const { return c[static_cast<std::size_t>(ia) * nb + ib]; }

  void add_scaled(const TruncPoly2& o, double s) {
    for (std::size_t k = 0; k < c.size(); ++k) c[k] += s * o.c[k];
  }

  TruncPoly2 mul(const TruncPoly2& o) const {
    TruncPoly2 out(na, nb);
    for (int ia = 0; ia < na; ++ia)
      for (int ib = 0; ib < nb; ++ib) {
        const double v = at(ia, ib);
        if (v == 0.0) continue;
        for (int ja = 0; ja + ia < na; ++ja)
          for (int jb = 0; jb + ib < nb; ++jb) out.at(ia + ja, ib + jb) += v * o.at(ja, jb);
      }
    return out;
  }
};

inline std::vector<TruncPoly2> ring_matmul(const std::vector<TruncPoly2>& x,
                                           const std::vector<TruncPoly2>& y, Index d, int na, int nb) {
  std::vector<TruncPoly2> out(static_cast<std::size_t>(d) * d, TruncPoly2(na, nb));
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) {
      auto& acc = out[static_cast<std::size_t>(i) * d + j];
      for (Index l = 0; l < d; ++l) {
        const auto& xe = x[static_cast<std::size_t>(i) * d + l];
        const auto& ye = y[static_cast<std::size_t>(l) * d + j];
        acc.add_scaled(xe.mul(ye), 1.0);
      }
    }
  return out;
}

}  // namespace detail

//! eta_{2r,2s}(x; A, B, Sigma): the scalar contraction
//! [(vec'A)^{(x)r} (x) (vec'B)^{(x)s}] D^{(x)2r+2s} phi_Sigma(x), computed
//! through the moment generating function of quadratic forms -- no d^{2r+2s}
//! vector is ever formed. Equality with the direct dnorm_deriv contraction is
//! exact and unit-tested.
inline double eta(const Vector& x, const Matrix& a, const Matrix& b, const Matrix& sigma, int r,
                  int s) {
  if (r < 0 || s < 0) throw std::invalid_argument("eta: orders must be nonnegative");
  const Index d = sigma.rows();
  if (x.size() != d) throw std::invalid_argument("eta: dim mismatch");
  if (r > 0 && (!is_symmetric(a) || a.rows() != d)) throw std::invalid_argument("eta: A must be symmetric d x d");
  if (s > 0 && (!is_symmetric(b) || b.rows() != d)) throw std::invalid_argument("eta: B must be symmetric d x d");
  GaussFactor gf(sigma);
  const double phi = gf.density(x);
  if (phi == 0.0) return 0.0;
  const int p = r + s;
  if (p == 0) return phi;

  const int na = r + 1, nb = s + 1;
  const Matrix pa = r > 0 ? Matrix(-2.0 * a * gf.inverse()) : Matrix::Zero(d, d);
  const Matrix pb = s > 0 ? Matrix(-2.0 * b * gf.inverse()) : Matrix::Zero(d, d);
  using detail::TruncPoly2;

  auto linear_mat = [&](const Matrix& ca, const Matrix& cb) {
    std::vector<TruncPoly2> m(static_cast<std::size_t>(d) * d, TruncPoly2(na, nb));
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j) {
        auto& e = m[static_cast<std::size_t>(i) * d + j];
        if (na > 1) e.at(1, 0) = ca(i, j);
        if (nb > 1) e.at(0, 1) = cb(i, j);
      }
    return m;
  };

  const auto n1 = linear_mat(pa, pb);                       // N = -2(aA + bB) Sigma^{-1}
  const auto t1 = linear_mat(r > 0 ? a : Matrix::Zero(d, d),  // T = aA + bB
                             s > 0 ? b : Matrix::Zero(d, d));

  TruncPoly2 g(na, nb);
  std::vector<TruncPoly2> geom(static_cast<std::size_t>(d) * d, TruncPoly2(na, nb));
  for (Index i = 0; i < d; ++i) geom[static_cast<std::size_t>(i) * d + i].at(0, 0) = 1.0;  // N^0
  std::vector<TruncPoly2> npow = geom;  // running N^k, starts at identity
  for (int k = 1; k <= p; ++k) {
    npow = detail::ring_matmul(npow, n1, d, na, nb);
    TruncPoly2 tr(na, nb);
    for (Index i = 0; i < d; ++i) tr.add_scaled(npow[static_cast<std::size_t>(i) * d + i], 1.0);
    g.add_scaled(tr, 0.5 / k);
    if (k <= p - 1)
      for (std::size_t e = 0; e < geom.size(); ++e) geom[e].add_scaled(npow[e], 1.0);
  }
  const auto rt = detail::ring_matmul(geom, t1, d, na, nb);
  const Vector u = gf.inverse() * x;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) g.add_scaled(rt[static_cast<std::size_t>(i) * d + j], u[i] * u[j]);

  if (g.at(0, 0) != 0.0) throw std::logic_error("eta: generating exponent has a constant term");
  // exp of the nilpotent part, truncated
  TruncPoly2 acc(na, nb), term(na, nb);
  acc.at(0, 0) = 1.0;
  term.at(0, 0) = 1.0;
  for (int k = 1; k <= p; ++k) {
    term = term.mul(g);
    for (double& v : term.c) v /= k;  // term = g^k / k!
    acc.add_scaled(term, 1.0);
  }
  double fact = 1.0;
  for (int k = 2; k <= r; ++k) fact *= k;
  for (int k = 2; k <= s; ++k) fact *= k;
  return phi * fact * acc.at(r, s);
}

//! eta_{2r}(x; Sigma) = eta_{2r,0}(x; I, I, Sigma): the r-fold Laplacian of
//! phi_Sigma. LaplacianEta precomputes all Sigma-dependent pieces so the
//! per-point cost is a few quadratic forms and one exp.
class LaplacianEta {
 public:
  LaplacianEta(const Matrix& sigma, int r) : r_(r), gf_(sigma) {
    if (r < 0) throw std::invalid_argument("LaplacianEta: r >= 0");
    const Index d = sigma.rows();
    Matrix invp = Matrix::Identity(d, d);
    // traces of Sigma^{-k}, k = 1..r
    tr_coef_.assign(r + 1, 0.0);
    double sgn = 1.0;
    for (int k = 1; k <= r; ++k) {
      invp = Matrix(invp * gf_.inverse());
      sgn *= -2.0;
      tr_coef_[k] = 0.5 * sgn * invp.trace() / k;
    }
    // quadratic-form matrices (-2)^k Sigma^{-(k+2)}, k = 0..r-1
    quad_.clear();
    if (r >= 1) {
      Matrix q = Matrix(gf_.inverse() * gf_.inverse());
      double c = 1.0;
      for (int k = 0; k < r; ++k) {
        quad_.push_back(Matrix(c * q));
        q = Matrix(q * gf_.inverse());
        c *= -2.0;
      }
    }
    rfact_ = 1.0;
    for (int k = 2; k <= r; ++k) rfact_ *= k;
  }

  int order() const { return r_; }
  const GaussFactor& factor() const { return gf_; }

  double operator()(const Vector& delta) const {
    const double phi = gf_.density(delta);
    if (r_ == 0 || phi == 0.0) return phi;
    const Index d = gf_.dim();
    double g[16];  // r is small by construction
    for (int k = 1; k <= r_; ++k) g[k] = tr_coef_[k];
    for (int k = 0; k < r_; ++k) {
      const double* q = quad_[static_cast<std::size_t>(k)].data();  // symmetric, column-major
      double acc = 0.0;
      for (Index j = 0; j < d; ++j) {
        double col = 0.0;
        for (Index i = 0; i < d; ++i) col += q[j * d + i] * delta[i];
        acc += col * delta[j];
      }
      g[k + 1] += acc;
    }
    double e[17];
    e[0] = 1.0;
    for (int m = 1; m <= r_; ++m) {
      double acc = 0.0;
      for (int k = 1; k <= m; ++k) acc += k * g[k] * e[m - k];
      e[m] = acc / m;
    }
    return phi * rfact_ * e[r_];
  }

 private:
  int r_;
  GaussFactor gf_;
  std::vector<double> tr_coef_;
  std::vector<Matrix> quad_;
  double rfact_ = 1.0;
};

inline double eta_short(const Vector& x, const Matrix& sigma, int r) {
  return LaplacianEta(sigma, r)(x);
}

//! E[(W'W)^r] for W ~ N(0, C), via the cumulant recursion
//! kappa_j = 2^{j-1} (j-1)! tr(C^j).
inline double chi_square_moment(const Matrix& c, int r) {
  if (r < 0) throw std::invalid_argument("chi_square_moment: r >= 0");
  if (r == 0) return 1.0;
  std::vector<double> kappa(r + 1, 0.0);
  Matrix p = c;
  double scale = 1.0;  // 2^{j-1} (j-1)!
  for (int j = 1; j <= r; ++j) {
    kappa[j] = scale * p.trace();
    if (j < r) {
      p = Matrix(p * c);
      scale *= 2.0 * j;
    }
  }
  std::vector<double> m(r + 1, 0.0);
  m[0] = 1.0;
  for (int k = 1; k <= r; ++k) {
    double acc = 0.0;
    double binom = 1.0;  // C(k-1, j-1)
    for (int j = 1; j <= k; ++j) {
      acc += binom * kappa[j] * m[k - j];
      binom = binom * (k - j) / j;
    }
    m[k] = acc;
  }
  return m[r];
}

//! nu_r(Sigma) = (-1)^r eta_{2r}(0; Sigma) / phi_Sigma(0).
inline double nu(const Matrix& sigma, int r) {
  GaussFactor gf(sigma);
  return chi_square_moment(gf.inverse(), r);
}

//! Leading integrated-variance term of the error expansions:
//! n^{-1} (-1)^r eta_{2r}(0; 2H), in its closed form
//! n^{-1} |H|^{-1/2} 2^{-(d+r)} pi^{-d/2} E[(W'W)^r], W ~ N(0, H^{-1}).
inline double iv_leading_term(const Matrix& h, double n, int r) {
  const Index d = h.rows();
  Eigen::LLT<Matrix> llt(Matrix(0.5 * (h + h.transpose())));
  if (llt.info() != Eigen::Success) throw std::domain_error("iv_leading_term: H not PD");
  double log_det = 0.0;
  for (Index i = 0; i < d; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  const Matrix hinv = llt.solve(Matrix::Identity(d, d));
  return std::exp(-0.5 * log_det) * std::pow(2.0, -static_cast<double>(d + r)) *
         std::pow(M_PI, -0.5 * d) * chi_square_moment(hinv, r) / n;
}

//! L2 inner product of two shifted Gaussian derivative fields:
//! integral of D^{(x)r} phi_A(x-a)' D^{(x)r} phi_B(x-b) dx
//! = (-1)^r eta_{2r}(a-b; A+B).
inline double cross_integral(const Vector& a, const Matrix& cov_a, const Vector& b,
                             const Matrix& cov_b, int r) {
  require_spd(cov_a, "cross_integral");
  require_spd(cov_b, "cross_integral");
  if (a.size() != b.size() || a.size() != cov_a.rows() || cov_a.rows() != cov_b.rows())
    throw std::invalid_argument("cross_integral: dim mismatch");
  const double sign = (r % 2 == 0) ? 1.0 : -1.0;
  return sign * eta_short(a - b, cov_a + cov_b, r);
}

}  // namespace kdd
