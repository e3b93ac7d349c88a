#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace kdd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

//! Default cap on materialized d^r-sized objects. Kronecker powers grow fast;
//! operations fail loudly instead of thrashing.
inline constexpr std::size_t kMaxTensorEntries = 100000;
inline constexpr Index kMaxSymmetrizerDim = 2048;

//! d^r with an overflow/cap guard.
inline std::size_t checked_pow(Index d, int r, std::size_t max_entries = kMaxTensorEntries) {
  if (d < 1 || r < 0) throw std::invalid_argument("checked_pow: need d >= 1, r >= 0");
  std::size_t v = 1;
  for (int i = 0; i < r; ++i) {
    v *= static_cast<std::size_t>(d);
    if (v > max_entries)
      throw std::length_error("tensor size " + std::to_string(d) + "^" + std::to_string(r) +
                              " exceeds cap " + std::to_string(max_entries));
  }
  return v;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

//! A^{(x)r} with A^{(x)0} = [1].
inline Matrix kron_power(const Matrix& a, int r, std::size_t max_entries = kMaxTensorEntries) {
  if (r < 0) throw std::invalid_argument("kron_power: r >= 0 required");
  checked_pow(a.rows(), r, max_entries);
  checked_pow(a.cols(), r, max_entries);
  Matrix out = Matrix::Ones(1, 1);
  for (int i = 0; i < r; ++i) out = kron(a, out);
  return out;
}

inline Vector kron_power(const Vector& a, int r, std::size_t max_entries = kMaxTensorEntries) {
  if (r < 0) throw std::invalid_argument("kron_power: r >= 0 required");
  checked_pow(a.size(), r, max_entries);
  Vector out = Vector::Ones(1);
  for (int i = 0; i < r; ++i) out = kron(a, out);
  return out;
}

//! (A^{(x)r}) x without materializing the d^r x d^r matrix: r mode products.
inline Vector kron_power_apply(const Matrix& a, int r, const Vector& x) {
  const Index d = a.rows();
  if (a.cols() != d) throw std::invalid_argument("kron_power_apply: square A required");
  const std::size_t len = checked_pow(d, r);
  if (static_cast<std::size_t>(x.size()) != len)
    throw std::invalid_argument("kron_power_apply: x has wrong length");
  if (r == 0) return x;
  Vector cur = x;
  Vector nxt(x.size());
  // Contract one tensor mode per pass; mode t has stride d^{r-1-t}.
  std::size_t outer = 1, inner = len / static_cast<std::size_t>(d);
  for (int t = 0; t < r; ++t) {
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * inner * d + in;
        for (Index s = 0; s < d; ++s) {
          double acc = 0.0;
          for (Index u = 0; u < d; ++u) acc += a(s, u) * cur[base + static_cast<std::size_t>(u) * inner];
          nxt[base + static_cast<std::size_t>(s) * inner] = acc;
        }
      }
    cur.swap(nxt);
    outer *= static_cast<std::size_t>(d);
    inner /= static_cast<std::size_t>(d);
  }
  return cur;
}

//! Column-stacking vec operator.
inline Vector vec(const Matrix& m) {
  Vector out(m.rows() * m.cols());
  Index k = 0;
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) out[k++] = m(i, j);
  return out;
}

inline Matrix unvec(const Vector& v, Index rows, Index cols) {
  if (v.size() != rows * cols) throw std::invalid_argument("unvec: size mismatch");
  Matrix out(rows, cols);
  Index k = 0;
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) out(i, j) = v[k++];
  return out;
}

//! K_{m,n}: permutation with K vec(A) = vec(A') for every m x n matrix A.
inline Matrix commutation_matrix(Index m, Index n) {
  if (m < 1 || n < 1) throw std::invalid_argument("commutation_matrix: m,n >= 1");
  Matrix k = Matrix::Zero(m * n, m * n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) k(i * n + j, j * m + i) = 1.0;
  return k;
}

//! S_{d,r}: averages all permutations of an r-fold Kronecker product of
//! d-vectors. Dense d^r x d^r; guarded by max_dim.
inline Matrix symmetrizer(Index d, int r, Index max_dim = kMaxSymmetrizerDim) {
  if (d < 1 || r < 0) throw std::invalid_argument("symmetrizer: d >= 1, r >= 0");
  std::size_t dim_sz = 1;
  for (int i = 0; i < r; ++i) {
    dim_sz *= static_cast<std::size_t>(d);
    if (dim_sz > static_cast<std::size_t>(max_dim))
      throw std::length_error("symmetrizer: d^r exceeds cap");
  }
  const Index dim = static_cast<Index>(dim_sz);
  if (r == 0) return Matrix::Ones(1, 1);
  Matrix s = Matrix::Zero(dim, dim);
  std::vector<int> perm(r);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<Index> digits(r);
  double rfact = 1.0;
  for (int i = 2; i <= r; ++i) rfact *= i;
  const double w = 1.0 / rfact;
  do {
    for (Index row = 0; row < dim; ++row) {
      Index rem = row;
      for (int t = r - 1; t >= 0; --t) {
        digits[t] = rem % d;
        rem /= d;
      }
      Index col = 0;
      for (int t = 0; t < r; ++t) col = col * d + digits[perm[t]];
      s(row, col) += w;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return s;
}

//! OF(2p) = (2p-1)(2p-3)...3*1; the argument is the even integer 2p.
inline double odd_factorial(int two_p) {
  if (two_p <= 0 || two_p % 2 != 0)
    throw std::invalid_argument("odd_factorial: argument must be a positive even integer");
  double v = 1.0;
  for (int k = two_p - 1; k >= 3; k -= 2) v *= k;
  return v;
}

// ---- symmetric positive definite helpers ----

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

//! Symmetry within 1e-10 relative, then smallest eigenvalue of (M+M')/2 > 0.
inline bool is_spd(const Matrix& m, double sym_tol = 1e-10) {
  if (!is_symmetric(m, sym_tol)) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0;
}

inline void require_spd(const Matrix& m, const char* what) {
  if (!is_spd(m)) throw std::domain_error(std::string(what) + ": symmetric positive definite matrix required");
}

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

}  // namespace kdd
