#include "kdd/tensor.hpp"

#include "support/oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <vector>

using namespace kdd;
using kdd::testing::random_spd;
using kdd::testing::random_vector;

namespace {

// index-wise Kronecker definition, kept separate from the implementation
Matrix kron_oracle(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      for (Index k = 0; k < b.rows(); ++k)
        for (Index l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

Matrix random_matrix(Rng& rng, Index r, Index c) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("kron basics") {
  Matrix two(1, 1);
  two << 2.0;
  REQUIRE((kron(two, Matrix::Identity(2, 2)) - 2.0 * Matrix::Identity(2, 2)).norm() == 0.0);

  Matrix d12 = Vector{{1.0, 2.0}}.asDiagonal();
  Matrix want = Vector{{1.0, 2.0, 2.0, 4.0}}.asDiagonal();
  REQUIRE((kron(d12, d12) - want).norm() == 0.0);

  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix a = random_matrix(rng, 2, 2), b = random_matrix(rng, 2, 2);
    const Matrix c = random_matrix(rng, 2, 2), d = random_matrix(rng, 2, 2);
    REQUIRE((kron(a, b) - kron_oracle(a, b)).cwiseAbs().maxCoeff() == 0.0);
    // mixed product property
    const Matrix lhs = kron(a, b) * kron(c, d);
    const Matrix rhs = kron(Matrix(a * c), Matrix(b * d));
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff()));
    // transpose
    REQUIRE((kron(a, b).transpose() - kron(Matrix(a.transpose()), Matrix(b.transpose()))).norm() < 1e-14);
  }
}

TEST_CASE("kron is bilinear and associative") {
  Rng rng(12);
  const Matrix a = random_matrix(rng, 2, 3), b = random_matrix(rng, 3, 2), c = random_matrix(rng, 2, 2);
  const double s = 1.7;
  REQUIRE((kron(Matrix(s * a), b) - s * kron(a, b)).norm() < 1e-12);
  REQUIRE((kron(a, Matrix(s * b)) - s * kron(a, b)).norm() < 1e-12);
  REQUIRE((kron(kron(a, b), c) - kron(a, kron(b, c))).norm() < 1e-12);
}

TEST_CASE("kron_power") {
  Rng rng(13);
  const Matrix a = random_matrix(rng, 2, 2);
  REQUIRE(kron_power(a, 0).rows() == 1);
  REQUIRE(kron_power(a, 0)(0, 0) == 1.0);
  REQUIRE((kron_power(a, 1) - a).norm() == 0.0);
  Matrix d12 = Vector{{1.0, 2.0}}.asDiagonal();
  Matrix want = Vector{{1.0, 2.0, 2.0, 4.0}}.asDiagonal();
  REQUIRE((kron_power(d12, 2) - want).norm() == 0.0);
  REQUIRE_THROWS_AS(kron_power(Matrix(Matrix::Identity(10, 10)), 8), std::length_error);
}

TEST_CASE("kron_power_apply matches materialized power") {
  Rng rng(14);
  for (int r = 0; r <= 3; ++r) {
    const Matrix a = random_matrix(rng, 2, 2);
    const Vector x = random_vector(rng, static_cast<Index>(std::pow(2, r)));
    const Vector got = kron_power_apply(a, r, x);
    const Vector want = kron_power(a, r) * x;
    REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + want.cwiseAbs().maxCoeff()));
  }
  const Matrix a3 = random_matrix(rng, 3, 3);
  const Vector x3 = random_vector(rng, 27);
  REQUIRE((kron_power_apply(a3, 3, x3) - kron_power(a3, 3) * x3).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("vec") {
  Matrix m(2, 2);
  m << 1, 3, 2, 4;
  const Vector v = vec(m);
  REQUIRE(v[0] == 1.0);
  REQUIRE(v[1] == 2.0);
  REQUIRE(v[2] == 3.0);
  REQUIRE(v[3] == 4.0);
  const Vector vi = vec(Matrix::Identity(2, 2));
  REQUIRE(vi[0] == 1.0);
  REQUIRE(vi[1] == 0.0);
  REQUIRE(vi[2] == 0.0);
  REQUIRE(vi[3] == 1.0);

  Rng rng(15);
  const Vector x = random_vector(rng, 2), y = random_vector(rng, 2);
  const Matrix outer = x * y.transpose();
  REQUIRE((vec(outer) - kron(y, x)).cwiseAbs().maxCoeff() < 1e-15);

  // vec(ABC) = (C' (x) A) vec(B)
  const Matrix a = random_matrix(rng, 2, 2), b = random_matrix(rng, 2, 3), c = random_matrix(rng, 3, 2);
  const Vector lhs = vec(Matrix(a * b * c));
  const Vector rhs = kron(Matrix(c.transpose()), a) * vec(b);
  REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff()));
}

TEST_CASE("commutation matrix") {
  REQUIRE(commutation_matrix(1, 1)(0, 0) == 1.0);
  Matrix a(2, 2);
  a << 1, 3, 2, 4;
  const Vector got = commutation_matrix(2, 2) * vec(a);
  REQUIRE(got[0] == 1.0);
  REQUIRE(got[1] == 3.0);
  REQUIRE(got[2] == 2.0);
  REQUIRE(got[3] == 4.0);

  Rng rng(16);
  for (auto [m, n] : std::vector<std::pair<Index, Index>>{{2, 3}, {3, 2}}) {
    const Matrix k = commutation_matrix(m, n);
    // K vec(A) = vec(A') over random A
    const Matrix b = random_matrix(rng, m, n);
    REQUIRE((k * vec(b) - vec(Matrix(b.transpose()))).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((k.transpose() - commutation_matrix(n, m)).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((k * k.transpose() - Matrix::Identity(m * n, m * n)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("symmetrizer") {
  REQUIRE((symmetrizer(3, 1) - Matrix::Identity(3, 3)).norm() == 0.0);

  Vector e1 = Vector::Zero(2), e2 = Vector::Zero(2);
  e1[0] = 1.0;
  e2[1] = 1.0;
  const Vector got = symmetrizer(2, 2) * kron(e1, e2);
  REQUIRE(got[0] == 0.0);
  REQUIRE(got[1] == 0.5);
  REQUIRE(got[2] == 0.5);
  REQUIRE(got[3] == 0.0);

  // full 4x4 against direct permutation average over tuples
  Matrix oracle = Matrix::Zero(4, 4);
  for (int i1 = 0; i1 < 2; ++i1)
    for (int i2 = 0; i2 < 2; ++i2) {
      const int row = i1 * 2 + i2;
      oracle(row, i1 * 2 + i2) += 0.5;
      oracle(row, i2 * 2 + i1) += 0.5;
    }
  REQUIRE((symmetrizer(2, 2) - oracle).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(17);
  for (auto [d, r] : std::vector<std::pair<Index, int>>{{2, 2}, {2, 3}, {3, 2}}) {
    const Matrix s = symmetrizer(d, r);
    REQUIRE((s * s - s).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Vector x = random_vector(rng, d);
    const Vector xr = kron_power(x, r);
    REQUIRE((s * xr - xr).cwiseAbs().maxCoeff() < 1e-13 * (1.0 + xr.cwiseAbs().maxCoeff()));
  }

  REQUIRE_THROWS_AS(symmetrizer(10, 8), std::length_error);
}

TEST_CASE("odd factorial") {
  REQUIRE(odd_factorial(2) == 1.0);
  REQUIRE(odd_factorial(4) == 3.0);
  REQUIRE(odd_factorial(6) == 15.0);
  REQUIRE(odd_factorial(8) == 105.0);
  REQUIRE_THROWS_AS(odd_factorial(3), std::invalid_argument);
  REQUIRE_THROWS_AS(odd_factorial(0), std::invalid_argument);
  REQUIRE_THROWS_AS(odd_factorial(-2), std::invalid_argument);
}

TEST_CASE("spd helpers") {
  Rng rng(18);
  const Matrix s = random_spd(rng, 3);
  REQUIRE(is_spd(s));
  Matrix asym = s;
  asym(0, 1) += 1e-3;
  REQUIRE(!is_spd(asym));
  REQUIRE(!is_spd(Matrix(-s)));
  REQUIRE_THROWS_AS(require_spd(Matrix(-s), "test"), std::domain_error);
}

TEST_CASE("checked_pow cap") {
  REQUIRE(checked_pow(2, 10) == 1024);
  REQUIRE_THROWS_AS(checked_pow(10, 6), std::length_error);
  REQUIRE(checked_pow(10, 6, 2000000) == 1000000);
}
