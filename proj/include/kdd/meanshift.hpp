#pragma once

#include "kdd/selector.hpp"
#include "kdd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace kdd {

//! Mean-shift settings. tol and merge_radius are in the H^{-1} metric, which
//! keeps them scale-free; alpha_pct drives the insignificant-group correction.
struct MeanShiftConfig {
  Matrix H;
  double tol = 1e-6;
  int max_iter = 400;
  double merge_radius = 0.1;
  double alpha_pct = 5.0;

  void validate() const {
    require_spd(H, "MeanShiftConfig");
    if (!(tol > 0.0) || !(merge_radius > 0.0) || max_iter < 1)
      throw std::invalid_argument("MeanShiftConfig: tol, merge_radius, max_iter must be positive");
  }
};

struct PathResult {
  Vector mode;
  std::vector<Vector> path;  // iterates including start and terminal
  bool converged = false;
  int iterations = 0;
  bool monotone_warning = false;
};

//! Cluster assignment plus the mode landscape that produced it.
struct Partition {
  std::vector<int> labels;
  std::vector<Vector> modes;
  std::vector<int> iterations;
  std::vector<std::vector<Vector>> trajectories;  // filled when requested
  std::vector<std::string> warnings;
  int correction_rounds = 0;
};

namespace detail {

//! Weighted-mean iteration state for a fixed (data, H): one pass computes the
//! shifted point and the log kernel density at the current point.
class MeanShiftEngine {
 public:
  MeanShiftEngine(const Matrix& data, const Matrix& h) : data_(data) {
    require_spd(h, "mean_shift");
    if (data.rows() < 1) throw std::invalid_argument("mean_shift: empty data");
    if (data.cols() != h.rows()) throw std::invalid_argument("mean_shift: dim mismatch");
    Eigen::LLT<Matrix> llt(Matrix(0.5 * (h + h.transpose())));
    hinv_ = llt.solve(Matrix::Identity(h.rows(), h.cols()));
    double log_det = 0.0;
    for (Index i = 0; i < h.rows(); ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    log_norm_ = -0.5 * (h.rows() * std::log(2.0 * M_PI) + log_det);
  }

  Index dim() const { return data_.cols(); }
  const Matrix& data() const { return data_; }

  double mahalanobis2(const Vector& a, const Vector& b) const {
    const Index d = data_.cols();
    const double* inv = hinv_.data();
    double acc = 0.0;
    for (Index j = 0; j < d; ++j) {
      double col = 0.0;
      for (Index i = 0; i < d; ++i) col += inv[j * d + i] * (a[i] - b[i]);
      acc += col * (a[j] - b[j]);
    }
    return acc;
  }

  //! One mean-shift step with log-sum-exp stabilized Gaussian weights;
  //! `log_density` receives log f_hat_H at y. Safe for concurrent paths:
  //! the exponent buffer is per-thread.
  Vector step(const Vector& y, double* log_density = nullptr) const {
    static thread_local std::vector<double> scratch;
    const Index n = data_.rows(), d = data_.cols();
    double max_e = -std::numeric_limits<double>::infinity();
    scratch.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const double e = -0.5 * mahalanobis2(y, data_.row(i).transpose());
      scratch[static_cast<std::size_t>(i)] = e;
      max_e = std::max(max_e, e);
    }
    Vector num = Vector::Zero(d);
    double den = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double w = std::exp(scratch[static_cast<std::size_t>(i)] - max_e);
      den += w;
      num += w * data_.row(i).transpose();
    }
    if (log_density != nullptr)
      *log_density = log_norm_ + max_e + std::log(den / static_cast<double>(n));
    return Vector(num / den);
  }

  double log_density(const Vector& y) const {
    double lf;
    (void)step(y, &lf);
    return lf;
  }

 private:
  const Matrix& data_;
  Matrix hinv_;
  double log_norm_ = 0.0;
};

}  // namespace detail

//! Y -> weighted mean of the data with Gaussian weights
//! exp(-1/2 (y - X_i)' H^{-1} (y - X_i)).
inline Vector mean_shift_step(const Vector& y, const Matrix& data, const Matrix& h) {
  return detail::MeanShiftEngine(data, h).step(y);
}

namespace detail {

inline PathResult run_path(const MeanShiftEngine& engine, const Vector& y0,
                           const MeanShiftConfig& cfg, bool keep_path) {
  PathResult res;
  Vector y = y0;
  if (keep_path) res.path.push_back(y);
  double log_prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iter; ++it) {
    double log_cur;  // log f_hat at the current iterate, from the same pass
    const Vector y_next = engine.step(y, &log_cur);
    if (it > 0 && log_cur < log_prev - 1e-12) res.monotone_warning = true;
    log_prev = log_cur;
    const double move2 = engine.mahalanobis2(y_next, y);
    y = y_next;
    if (keep_path) res.path.push_back(y);
    res.iterations = it + 1;
    if (move2 < cfg.tol * cfg.tol) {
      res.converged = true;
      break;
    }
  }
  if (engine.log_density(y) < log_prev - 1e-12) res.monotone_warning = true;
  res.mode = y;
  return res;
}

}  // namespace detail

//! Iterate mean_shift_step from y0 until the H^{-1}-metric move drops below
//! tol or max_iter is hit. The kernel density along the path is nondecreasing
//! up to numerical noise; a decrease beyond 1e-12 sets monotone_warning.
inline PathResult mean_shift_path(const Vector& y0, const Matrix& data, const MeanShiftConfig& cfg,
                                  bool keep_path = true) {
  cfg.validate();
  detail::MeanShiftEngine engine(data, cfg.H);
  return detail::run_path(engine, y0, cfg, keep_path);
}

//! Modal clustering: run the mean shift from every data point, merge terminal
//! points by single linkage in the H^{-1} metric at merge_radius, and label
//! each point by its merged mode. The mode reported for a group is its
//! highest-density terminal.
inline Partition cluster(const Matrix& data, const MeanShiftConfig& cfg, bool keep_paths = false) {
  cfg.validate();
  if (data.rows() < 1) throw std::invalid_argument("cluster: empty data");
  const std::size_t n = static_cast<std::size_t>(data.rows());
  detail::MeanShiftEngine engine(data, cfg.H);

  std::vector<PathResult> paths(n);
  parallel_for(n, [&](std::size_t i) {
    paths[i] = detail::run_path(engine, data.row(static_cast<Index>(i)).transpose(), cfg, keep_paths);
  });

  // single-linkage merge of terminals
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  };
  const double r2 = cfg.merge_radius * cfg.merge_radius;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (engine.mahalanobis2(paths[i].mode, paths[j].mode) < r2) {
        const int a = find(static_cast<int>(i)), b = find(static_cast<int>(j));
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
      }

  Partition part;
  part.labels.assign(n, -1);
  part.iterations.resize(n);
  std::map<int, int> group_label;  // union root -> label, by first occurrence
  std::vector<std::size_t> representative;
  std::vector<double> rep_logf;
  for (std::size_t i = 0; i < n; ++i) {
    const int root = find(static_cast<int>(i));
    auto it = group_label.find(root);
    int label;
    if (it == group_label.end()) {
      label = static_cast<int>(group_label.size());
      group_label.emplace(root, label);
      representative.push_back(i);
      rep_logf.push_back(engine.log_density(paths[i].mode));
    } else {
      label = it->second;
      const double lf = engine.log_density(paths[i].mode);
      if (lf > rep_logf[static_cast<std::size_t>(label)]) {
        rep_logf[static_cast<std::size_t>(label)] = lf;
        representative[static_cast<std::size_t>(label)] = i;
      }
    }
    part.labels[i] = label;
    part.iterations[i] = paths[i].iterations;
  }
  part.modes.reserve(representative.size());
  for (std::size_t g = 0; g < representative.size(); ++g)
    part.modes.push_back(paths[representative[g]].mode);
  if (keep_paths) {
    part.trajectories.resize(n);
    for (std::size_t i = 0; i < n; ++i) part.trajectories[i] = std::move(paths[i].path);
  }
  int unconverged = 0, monotone = 0;
  for (const auto& p : paths) {
    if (!p.converged) ++unconverged;
    if (p.monotone_warning) ++monotone;
  }
  if (unconverged > 0)
    part.warnings.push_back("cluster: " + std::to_string(unconverged) + " paths hit max_iter");
  if (monotone > 0)
    part.warnings.push_back("cluster: " + std::to_string(monotone) +
                            " paths saw a density decrease beyond 1e-12");
  return part;
}

//! Iterative correction for insignificant groups: drop points in groups
//! smaller than alpha_pct percent of the biggest group, re-select the
//! bandwidth on the retained points, re-cluster, and assign dropped points to
//! the basin of the new estimate; repeat until stable (hard cap 20 rounds).
inline Partition correct_insignificant(const Matrix& data, const MeanShiftConfig& cfg,
                                       const SelectorConfig& selector) {
  cfg.validate();
  if (!(cfg.alpha_pct > 0.0 && cfg.alpha_pct < 100.0))
    throw std::invalid_argument("correct_insignificant: alpha_pct in (0, 100)");
  const std::size_t n = static_cast<std::size_t>(data.rows());
  const Index d = data.cols();

  std::vector<char> active(n, 1);
  Matrix h = cfg.H;
  Partition best;
  std::vector<std::string> accumulated_warnings;

  for (int round = 0; round < 20; ++round) {
    std::vector<Index> active_rows;
    for (std::size_t i = 0; i < n; ++i)
      if (active[i]) active_rows.push_back(static_cast<Index>(i));

    if (active_rows.size() < static_cast<std::size_t>(d) + 2) {
      Partition fallback;
      fallback.labels.assign(n, 0);
      fallback.modes.push_back(data.colwise().mean().transpose());
      fallback.correction_rounds = round;
      fallback.warnings.push_back(
          "correct_insignificant: nearly all points flagged insignificant; single-cluster fallback");
      return fallback;
    }

    Matrix subset(static_cast<Index>(active_rows.size()), d);
    for (std::size_t k = 0; k < active_rows.size(); ++k) subset.row(static_cast<Index>(k)) = data.row(active_rows[k]);

    MeanShiftConfig round_cfg = cfg;
    round_cfg.H = h;
    Partition part = cluster(subset, round_cfg, false);

    // assign every point (retained or dropped) under the current estimate
    for (const auto& w : part.warnings)
      accumulated_warnings.push_back("round " + std::to_string(round) + ": " + w);
    Partition combined;
    combined.labels.assign(n, -1);
    combined.iterations.assign(n, 0);
    combined.modes = part.modes;
    combined.warnings = accumulated_warnings;
    combined.correction_rounds = round;
    for (std::size_t k = 0; k < active_rows.size(); ++k) {
      combined.labels[static_cast<std::size_t>(active_rows[k])] = part.labels[k];
      combined.iterations[static_cast<std::size_t>(active_rows[k])] = part.iterations[k];
    }
    {
      detail::MeanShiftEngine engine(subset, h);
      std::vector<std::size_t> dropped;
      for (std::size_t i = 0; i < n; ++i)
        if (!active[i]) dropped.push_back(i);
      std::vector<int> dropped_labels(dropped.size());
      std::vector<int> dropped_iters(dropped.size());
      parallel_for(dropped.size(), [&](std::size_t k) {
        const PathResult p =
            detail::run_path(engine, data.row(static_cast<Index>(dropped[k])).transpose(), round_cfg, false);
        int best_mode = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < part.modes.size(); ++g) {
          const double dist = engine.mahalanobis2(p.mode, part.modes[g]);
          if (dist < best_d) {
            best_d = dist;
            best_mode = static_cast<int>(g);
          }
        }
        dropped_labels[k] = best_mode;
        dropped_iters[k] = p.iterations;
      });
      for (std::size_t k = 0; k < dropped.size(); ++k) {
        combined.labels[dropped[k]] = dropped_labels[k];
        combined.iterations[dropped[k]] = dropped_iters[k];
      }
    }

    // group sizes over the full data set
    std::vector<std::size_t> sizes(part.modes.size(), 0);
    for (int l : combined.labels) sizes[static_cast<std::size_t>(l)]++;
    const std::size_t biggest = *std::max_element(sizes.begin(), sizes.end());
    const double threshold = cfg.alpha_pct / 100.0 * static_cast<double>(biggest);

    std::vector<char> small(sizes.size(), 0);
    bool any_small = false;
    for (std::size_t g = 0; g < sizes.size(); ++g)
      if (static_cast<double>(sizes[g]) < threshold) {
        small[g] = 1;
        any_small = true;
      }
    if (!any_small) return combined;
    best = combined;

    bool changed = false;
    for (std::size_t i = 0; i < n; ++i)
      if (active[i] && small[static_cast<std::size_t>(combined.labels[i])]) {
        active[i] = 0;
        changed = true;
      }
    if (!changed) {
      // previously dropped points keep landing in small groups; accept as is
      best.warnings.push_back("correct_insignificant: small groups persist among dropped points");
      return best;
    }

    std::vector<Index> retained;
    for (std::size_t i = 0; i < n; ++i)
      if (active[i]) retained.push_back(static_cast<Index>(i));
    Matrix retained_data(static_cast<Index>(retained.size()), d);
    for (std::size_t k = 0; k < retained.size(); ++k)
      retained_data.row(static_cast<Index>(k)) = data.row(retained[k]);
    try {
      h = select_bandwidth(retained_data, selector).H;
    } catch (const std::exception& e) {
      best.warnings.push_back(std::string("correct_insignificant: bandwidth re-selection failed (") +
                              e.what() + "); keeping previous H");
    }
  }
  best.warnings.push_back("correct_insignificant: hit the 20-round cap");
  return best;
}

//! Hubert-Arabie adjusted Rand index between two labelings.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("adjusted_rand_index: need n >= 2");
  std::map<int, int> ida, idb;
  for (int v : a) ida.emplace(v, static_cast<int>(ida.size()));
  for (int v : b) idb.emplace(v, static_cast<int>(idb.size()));
  const std::size_t ka = ida.size(), kb = idb.size();
  std::vector<double> table(ka * kb, 0.0), ra(ka, 0.0), rb(kb, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int x = ida[a[i]], y = idb[b[i]];
    table[static_cast<std::size_t>(x) * kb + y] += 1.0;
    ra[static_cast<std::size_t>(x)] += 1.0;
    rb[static_cast<std::size_t>(y)] += 1.0;
  }
  auto choose2 = [](double m) { return 0.5 * m * (m - 1.0); };
  double sum_cells = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (double v : table) sum_cells += choose2(v);
  for (double v : ra) sum_a += choose2(v);
  for (double v : rb) sum_b += choose2(v);
  const double expected = sum_a * sum_b / choose2(static_cast<double>(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return (sum_cells == expected) ? 1.0 : 0.0;
  return (sum_cells - expected) / (max_index - expected);
}

}  // namespace kdd
