#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace kdd {

//! Worker count: KDD_THREADS env var if set, otherwise hardware concurrency.
inline unsigned thread_count() {
  if (const char* env = std::getenv("KDD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

//! Kahan-compensated accumulator; tiles sum independently and tile values
//! merge in tile order, so results do not depend on thread scheduling.
struct Kahan {
  double sum = 0.0, carry = 0.0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

namespace detail {

//! Set while a worker thread is executing a parallel region; nested
//! reductions then run serially instead of oversubscribing. The tile
//! structure is unchanged, so values are identical either way.
inline thread_local bool inside_parallel_region = false;

struct ParallelRegionGuard {
  ParallelRegionGuard() { inside_parallel_region = true; }
  ~ParallelRegionGuard() { inside_parallel_region = false; }
};

//! Map a flat index p in [0, n(n-1)/2) to the pair (i, j), i < j, ordered
//! lexicographically by i.
inline void pair_from_flat(std::size_t p, std::size_t n, std::size_t& i, std::size_t& j) {
  // solve cum(i) <= p < cum(i+1), cum(i) = i*n - i(i+1)/2
  double nf = static_cast<double>(n);
  double disc = (2.0 * nf - 1.0) * (2.0 * nf - 1.0) - 8.0 * static_cast<double>(p);
  std::size_t gi = static_cast<std::size_t>((2.0 * nf - 1.0 - std::sqrt(disc)) / 2.0);
  auto cum = [n](std::size_t i) { return i * n - i * (i + 1) / 2; };
  while (gi > 0 && cum(gi) > p) --gi;
  while (cum(gi + 1) <= p) ++gi;
  i = gi;
  j = p - cum(gi) + gi + 1;
}

}  // namespace detail

//! Deterministic parallel reduction over all unordered pairs (i < j) of
//! 0..n-1. `body(i, j, acc)` accumulates into a per-tile accumulator created
//! by `make_acc()`; `merge(total, tile_acc)` folds tiles in tile order.
template <class Total, class MakeAcc, class Body, class Merge>
void for_each_pair_reduce(std::size_t n, MakeAcc make_acc, Body body, Merge merge, Total& total,
                          std::size_t tile_size = 16384) {
  using Acc = decltype(make_acc());
  const std::size_t n_pairs = n * (n - 1) / 2;
  if (n_pairs == 0) return;
  const std::size_t n_tiles = (n_pairs + tile_size - 1) / tile_size;
  const unsigned workers =
      detail::inside_parallel_region ? 1u : static_cast<unsigned>(std::min<std::size_t>(thread_count(), n_tiles));

  std::vector<Acc> partials;
  partials.reserve(n_tiles);
  for (std::size_t t = 0; t < n_tiles; ++t) partials.push_back(make_acc());

  auto run_tile = [&](std::size_t t) {
    const std::size_t begin = t * tile_size;
    const std::size_t end = std::min(begin + tile_size, n_pairs);
    std::size_t i, j;
    detail::pair_from_flat(begin, n, i, j);
    Acc& acc = partials[t];
    for (std::size_t p = begin; p < end; ++p) {
      body(i, j, acc);
      if (++j == n) {
        ++i;
        j = i + 1;
      }
    }
  };

  if (workers <= 1) {
    for (std::size_t t = 0; t < n_tiles; ++t) run_tile(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        detail::ParallelRegionGuard guard;
        for (std::size_t t = next.fetch_add(1); t < n_tiles; t = next.fetch_add(1)) run_tile(t);
      });
    for (auto& th : pool) th.join();
  }
  for (std::size_t t = 0; t < n_tiles; ++t) merge(total, partials[t]);
}

//! Deterministic parallel map over indices 0..n-1; results land in a caller
//! array indexed by i, so scheduling cannot reorder anything observable.
template <class Fn>
void parallel_for(std::size_t n, Fn fn) {
  const unsigned workers = detail::inside_parallel_region
                               ? 1u
                               : static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      detail::ParallelRegionGuard guard;
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace kdd
