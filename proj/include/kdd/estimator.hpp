#pragma once

#include "kdd/gauss.hpp"
#include "kdd/parallel.hpp"
#include "kdd/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace kdd {

//! Symmetric positive-definite smoothing matrix; validated once on entry to
//! the public APIs.
class Bandwidth {
 public:
  explicit Bandwidth(Matrix h) : h_(std::move(h)) { require_spd(h_, "Bandwidth"); }
  const Matrix& matrix() const { return h_; }
  Index dim() const { return h_.rows(); }

 private:
  Matrix h_;
};

//! Data plus bandwidth plus derivative order: everything a kernel
//! density-derivative estimate needs.
struct KdeModel {
  Matrix data;  // n x d
  Bandwidth bandwidth;
  int order = 0;

  KdeModel(Matrix pts, Bandwidth h, int r) : data(std::move(pts)), bandwidth(std::move(h)), order(r) {
    if (data.rows() < 2) throw std::invalid_argument("KdeModel: need n >= 2");
    if (data.cols() != bandwidth.dim()) throw std::invalid_argument("KdeModel: dim mismatch");
    if (r < 0) throw std::invalid_argument("KdeModel: order >= 0");
    require_finite(data, "KdeModel");
  }
};

namespace detail {

//! Sum of D^{(x)order} phi_Sigma over a set of displacement vectors, kept in
//! multiset storage with compensated tile sums. Shared by psi_estimate and
//! the selector pilot machinery.
class DerivSum {
 public:
  DerivSum(const Matrix& sigma, int order) : ev_(sigma, order), order_(order) {}

  //! Accumulates sum over all ordered pairs (i, j), including i = j, of
  //! D^{(x)order} phi_Sigma(X_i - X_j). Even order makes the (i,j)/(j,i)
  //! terms equal, so the off-diagonal part is twice the i < j sum.
  Vector all_pairs(const Matrix& data, std::size_t max_entries = kMaxTensorEntries) const {
    const std::size_t n = static_cast<std::size_t>(data.rows());
    if (order_ % 2 != 0)
      throw std::invalid_argument("DerivSum::all_pairs: even derivative order expected");
    const std::size_t count = ev_.table().count(order_);

    struct Acc {
      std::vector<Kahan> v;
      HermiteWorkspace ws;
      Vector delta;
    };
    std::vector<Kahan> total(count);
    auto make_acc = [&] {
      Acc a;
      a.v.resize(count);
      a.delta.resize(data.cols());
      return a;
    };
    auto body = [&](std::size_t i, std::size_t j, Acc& acc) {
      acc.delta = data.row(static_cast<Index>(i)) - data.row(static_cast<Index>(j));
      ev_.eval(acc.delta, acc.ws);
      const auto& vals = acc.ws.vals[order_];
      for (std::size_t k = 0; k < count; ++k) acc.v[k].add(vals[k]);
    };
    auto merge = [&](std::vector<Kahan>& tot, const Acc& acc) {
      for (std::size_t k = 0; k < count; ++k) tot[k].add(acc.v[k].value());
    };
    for_each_pair_reduce(n, make_acc, body, merge, total);

    // diagonal terms: n copies of the value at zero
    HermiteWorkspace ws0;
    ev_.eval(Vector::Zero(data.cols()), ws0);

    Vector full(static_cast<Index>(checked_pow(data.cols(), order_, max_entries)));
    const auto ranks = ev_.table().tuple_ranks(order_, max_entries);
    for (std::size_t t = 0; t < ranks.size(); ++t) {
      const double off = 2.0 * total[static_cast<std::size_t>(ranks[t])].value();
      full[static_cast<Index>(t)] =
          off + static_cast<double>(n) * ws0.vals[order_][static_cast<std::size_t>(ranks[t])];
    }
    return full;
  }

 private:
  HermiteEvaluator ev_;
  int order_;
};

}  // namespace detail

//! D^{(x)r} f_hat_H(x) = n^{-1} sum_i D^{(x)r} phi_H(x - X_i).
inline DerivVector kde_deriv(const KdeModel& model, const Vector& x,
                             std::size_t max_entries = kMaxTensorEntries) {
  if (x.size() != model.data.cols()) throw std::invalid_argument("kde_deriv: dim mismatch");
  const Index d = model.data.cols();
  const int r = model.order;
  const std::size_t len = checked_pow(d, r, max_entries);
  HermiteEvaluator ev(model.bandwidth.matrix(), r);
  HermiteWorkspace ws;
  const std::size_t count = ev.table().count(r);
  std::vector<Kahan> acc(count);
  Vector delta(d);
  for (Index i = 0; i < model.data.rows(); ++i) {
    delta = x - model.data.row(i).transpose();
    ev.eval(delta, ws);
    for (std::size_t k = 0; k < count; ++k) acc[k].add(ws.vals[r][k]);
  }
  const double inv_n = 1.0 / static_cast<double>(model.data.rows());
  const auto ranks = ev.table().tuple_ranks(r, max_entries);
  DerivVector out;
  out.dim = d;
  out.order = r;
  out.values.resize(static_cast<Index>(len));
  for (std::size_t t = 0; t < len; ++t)
    out.values[static_cast<Index>(t)] = inv_n * acc[static_cast<std::size_t>(ranks[t])].value();
  return out;
}

//! Axis-aligned evaluation lattice.
struct GridSpec {
  Vector lo, hi;
  std::vector<Index> counts;  // nodes per axis, >= 1

  Index num_nodes() const {
    Index n = 1;
    for (Index c : counts) n *= c;
    return n;
  }
  //! Node coordinates for flat index (last axis fastest).
  Vector node(Index flat) const {
    const Index d = lo.size();
    Vector x(d);
    for (Index a = d - 1; a >= 0; --a) {
      const Index c = counts[static_cast<std::size_t>(a)];
      const Index idx = flat % c;
      flat /= c;
      x[a] = (c == 1) ? lo[a] : lo[a] + (hi[a] - lo[a]) * static_cast<double>(idx) / (c - 1);
    }
    return x;
  }
};

//! Pointwise kde_deriv over a grid; equal to individual calls by contract.
inline std::vector<DerivVector> kde_grid(const KdeModel& model, const GridSpec& grid) {
  if (grid.lo.size() != model.data.cols() || grid.hi.size() != model.data.cols() ||
      static_cast<Index>(grid.counts.size()) != model.data.cols())
    throw std::invalid_argument("kde_grid: grid dimension mismatch");
  const Index m = grid.num_nodes();
  std::vector<DerivVector> out(static_cast<std::size_t>(m));
  parallel_for(static_cast<std::size_t>(m),
               [&](std::size_t k) { out[k] = kde_deriv(model, grid.node(static_cast<Index>(k))); });
  return out;
}

//! psi_hat_{2r}(G) = n^{-2} sum_{i,j} D^{(x)2r} phi_G(X_i - X_j), diagonal
//! included exactly as written.
inline DerivVector psi_estimate(const Matrix& data, const Bandwidth& g, int r,
                                std::size_t max_entries = kMaxTensorEntries) {
  if (data.rows() < 2) throw std::invalid_argument("psi_estimate: need n >= 2");
  if (data.cols() != g.dim()) throw std::invalid_argument("psi_estimate: dim mismatch");
  const double n = static_cast<double>(data.rows());
  detail::DerivSum sum(g.matrix(), 2 * r);
  DerivVector out;
  out.dim = data.cols();
  out.order = 2 * r;
  out.values = sum.all_pairs(data, max_entries) / (n * n);
  return out;
}

}  // namespace kdd
