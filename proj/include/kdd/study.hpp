#pragma once

#include "kdd/io.hpp"
#include "kdd/meanshift.hpp"
#include "kdd/mise.hpp"
#include "kdd/mixture.hpp"
#include "kdd/parallel.hpp"
#include "kdd/rng.hpp"
#include "kdd/selector.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace kdd {

// ---- convergence-rate table ----

struct RateEntry {
  int r;
  double n;
  int d;
  double cv;      // n^{-d/(2d+4r+8)} / 1000^{-1/6}
  double pi_scv;  // n^{-2/(d+2r+6)} / 1000^{-1/6}
};

//! All 72 relative-rate entries over r in {0,1,2}, n in {1e3,1e4,1e5},
//! d in {2..5}, normalized by the bivariate density-CV base case.
inline std::vector<RateEntry> rate_table() {
  const double base = std::pow(1000.0, -1.0 / 6.0);
  std::vector<RateEntry> out;
  for (int r : {0, 1, 2})
    for (double n : {1e3, 1e4, 1e5})
      for (int d : {2, 3, 4, 5}) {
        RateEntry e;
        e.r = r;
        e.n = n;
        e.d = d;
        e.cv = std::pow(n, -static_cast<double>(d) / (2.0 * d + 4.0 * r + 8.0)) / base;
        e.pi_scv = std::pow(n, -2.0 / (static_cast<double>(d) + 2.0 * r + 6.0)) / base;
        out.push_back(e);
      }
  return out;
}

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

inline std::string format_rate_table() {
  std::ostringstream os;
  os << "        ";
  for (int d : {2, 3, 4, 5}) os << "      d=" << d << "       ";
  os << "\n        ";
  for (int i = 0; i < 4; ++i) os << "   CV   PI/SCV  ";
  os << "\n";
  const auto entries = rate_table();
  std::size_t idx = 0;
  for (int r : {0, 1, 2}) {
    for (double n : {1e3, 1e4, 1e5}) {
      char head[32];
      std::snprintf(head, sizeof(head), "r=%d n=1e%d", r, static_cast<int>(std::log10(n)));
      os << head;
      for (int k = 0; k < 4; ++k) {
        char cell[40];
        std::snprintf(cell, sizeof(cell), "  %.3f  %.3f ", entries[idx].cv, entries[idx].pi_scv);
        os << cell;
        ++idx;
      }
      os << "\n";
    }
  }
  return os.str();
}

// ---- study configuration ----

struct StudyConfig {
  std::string kind;                 // "ise" or "cluster"
  std::vector<std::string> models;  // built-in names or config paths
  Index n = 1000;
  int replications = 100;
  std::vector<int> r_orders{0};
  std::vector<SelectorConfig> selectors;
  std::uint64_t seed = 1;
  std::string output_dir;
  double alpha_pct = 5.0;  // cluster studies
};

inline StudyConfig study_config_from_json(const Json& j) {
  StudyConfig cfg;
  if (j.contains("schema") && j.at("schema").get<std::string>() != kSchemaVersion)
    throw std::invalid_argument("study config: unsupported schema version");
  cfg.kind = j.value("kind", std::string());
  for (const auto& m : j.at("models")) cfg.models.push_back(m.get<std::string>());
  cfg.n = j.value("n", 1000);
  cfg.replications = j.value("replications", 100);
  if (j.contains("r_orders")) {
    cfg.r_orders.clear();
    for (const auto& r : j.at("r_orders")) cfg.r_orders.push_back(r.get<int>());
  }
  for (const auto& s : j.at("selectors")) cfg.selectors.push_back(selector_config_from_json(s));
  cfg.seed = j.value("seed", 1ULL);
  cfg.output_dir = j.value("output", std::string());
  cfg.alpha_pct = j.value("alpha_pct", 5.0);
  if (cfg.replications < 1) throw std::invalid_argument("study config: replications >= 1");
  if (cfg.models.empty()) throw std::invalid_argument("study config: no models");
  if (cfg.selectors.empty()) throw std::invalid_argument("study config: no selectors");
  return cfg;
}

// ---- records ----

struct StudyRecord {
  std::string model;
  std::string selector;
  int r = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  Matrix H;
  std::optional<double> ise;
  std::optional<double> ari;
  std::optional<int> n_clusters;
  std::string error;  // nonempty when the selector failed; never dropped
  double runtime_s = 0.0;  // sidecar only, excluded from record files
};

struct StudyResult {
  std::vector<StudyRecord> records;
  std::string summary_csv;
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

//! Fixed replication seed rule: hash64(base, model, selector, r, rep).
inline std::uint64_t record_seed(std::uint64_t base, const std::string& model,
                                 const std::string& selector, int r, int rep) {
  return derive_seed(base, {fnv1a64(model), fnv1a64(selector), static_cast<std::uint64_t>(r),
                            static_cast<std::uint64_t>(rep)});
}

inline void sort_records(std::vector<StudyRecord>& recs) {
  std::sort(recs.begin(), recs.end(), [](const StudyRecord& a, const StudyRecord& b) {
    return std::tie(a.model, a.selector, a.r, a.rep) < std::tie(b.model, b.selector, b.r, b.rep);
  });
}

inline std::vector<double> quantiles(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double q : {0.05, 0.25, 0.5, 0.75, 0.95}) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    out.push_back(v[lo] + (pos - lo) * (v[hi] - v[lo]));
  }
  return out;
}

}  // namespace detail

//! Resolve a model string to a NormalMixture: built-in name or JSON path.
inline NormalMixture resolve_mixture(const std::string& name) {
  if (name == "bivariate-normal")
    return NormalMixture({{1.0, Vector::Zero(2), Matrix::Identity(2, 2)}});
  if (name == "bimodal-fixture") {
    std::vector<MixtureComponent> cs;
    cs.push_back({0.5, Vector{{-2.0, 0.0}}, Matrix::Identity(2, 2)});
    cs.push_back({0.5, Vector{{2.0, 0.0}}, Matrix::Identity(2, 2)});
    return NormalMixture(std::move(cs));
  }
  return mixture_from_json(load_json_file(name));
}

//! Resolve a model string to a ClusterModel: built-in or JSON path.
inline ClusterModel resolve_cluster_model(const std::string& name) {
  if (name == "4-crescent") return four_crescent_model();
  if (name == "broken-ring") return broken_ring_model();
  if (name == "eye") return eye_model();
  const Json j = load_json_file(name);
  return cluster_model_from_json(j, name);
}

//! Crude O(n^2) wall-clock estimate used only for a budget warning.
inline void warn_if_expensive(const StudyConfig& cfg, std::ostream& err = std::cerr) {
  const double pair_ops = static_cast<double>(cfg.n) * static_cast<double>(cfg.n) *
                          cfg.replications * static_cast<double>(cfg.selectors.size()) *
                          static_cast<double>(std::max<std::size_t>(cfg.models.size(), 1)) *
                          static_cast<double>(cfg.r_orders.size());
  // ~500 criterion evaluations at ~40ns per pair kernel
  const double est_seconds = pair_ops * 500.0 * 4e-8 / thread_count();
  if (est_seconds > 3600.0)
    err << "[kdd] warning: estimated study cost ~" << static_cast<long>(est_seconds / 60.0)
        << " minutes under the O(n^2) cost model\n";
}

//! ISE study: sample, select, score the closed-form ISE, one record per
//! (model, selector, r, replication). Selector failures are flagged records.
inline StudyResult run_ise_study(const StudyConfig& cfg) {
  StudyResult out;
  warn_if_expensive(cfg);
  struct Task {
    std::size_t model_idx;
    std::size_t sel_idx;
    int r;
    int rep;
  };
  std::vector<Task> tasks;
  for (std::size_t mi = 0; mi < cfg.models.size(); ++mi)
    for (std::size_t si = 0; si < cfg.selectors.size(); ++si)
      for (int r : cfg.r_orders)
        for (int rep = 0; rep < cfg.replications; ++rep) tasks.push_back({mi, si, r, rep});

  std::vector<NormalMixture> mixtures;
  for (const auto& m : cfg.models) mixtures.push_back(resolve_mixture(m));
  // oracle bandwidths depend only on (model, r); share them across reps
  std::map<std::pair<std::size_t, int>, Matrix> oracle_cache;
  for (std::size_t mi = 0; mi < cfg.models.size(); ++mi)
    for (std::size_t si = 0; si < cfg.selectors.size(); ++si)
      if (cfg.selectors[si].method == Method::OR)
        for (int r : cfg.r_orders)
          oracle_cache.emplace(std::make_pair(mi, r),
                               oracle_bandwidth(mixtures[mi], cfg.n, r).H);

  out.records.resize(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t t) {
    const Task& task = tasks[t];
    const NormalMixture& f = mixtures[task.model_idx];
    SelectorConfig sel = cfg.selectors[task.sel_idx];
    sel.deriv_order = task.r;
    StudyRecord rec;
    rec.model = cfg.models[task.model_idx];
    rec.selector = method_name(sel.method);
    rec.r = task.r;
    rec.rep = task.rep;
    rec.seed = detail::record_seed(cfg.seed, rec.model, rec.selector, task.r, task.rep);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const LabeledSample sample = sample_mixture(f, cfg.n, rec.seed);
      Matrix h;
      if (sel.method == Method::OR)
        h = oracle_cache.at(std::make_pair(task.model_idx, task.r));
      else
        h = select_bandwidth(sample.points, sel).H;
      rec.H = h;
      rec.ise = ise(KdeModel(sample.points, Bandwidth(h), task.r), f);
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.records[t] = std::move(rec);
  });
  detail::sort_records(out.records);

  // summary: mean log-ISE and quantiles per (model, selector, r)
  std::map<std::tuple<std::string, std::string, int>, std::vector<double>> groups;
  for (const auto& rec : out.records)
    if (rec.error.empty() && rec.ise) groups[{rec.model, rec.selector, rec.r}].push_back(std::log(*rec.ise));
  std::ostringstream s;
  s << "model,selector,r,count,mean_log_ise,q05,q25,q50,q75,q95\n";
  for (const auto& [key, vals] : groups) {
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    const auto q = detail::quantiles(vals);
    s << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
      << vals.size() << ',' << format_double(mean);
    for (double v : q) s << ',' << format_double(v);
    s << "\n";
  }
  out.summary_csv = s.str();
  return out;
}

//! Clustering study: sample with labels, select the gradient bandwidth,
//! run the corrected mean shift, score the ARI against the truth.
inline StudyResult run_cluster_study(const StudyConfig& cfg) {
  StudyResult out;
  warn_if_expensive(cfg);
  struct Task {
    std::size_t model_idx;
    std::size_t sel_idx;
    int rep;
  };
  std::vector<Task> tasks;
  for (std::size_t mi = 0; mi < cfg.models.size(); ++mi)
    for (std::size_t si = 0; si < cfg.selectors.size(); ++si)
      for (int rep = 0; rep < cfg.replications; ++rep) tasks.push_back({mi, si, rep});

  std::vector<ClusterModel> models;
  for (const auto& m : cfg.models) models.push_back(resolve_cluster_model(m));

  out.records.resize(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t t) {
    const Task& task = tasks[t];
    SelectorConfig sel = cfg.selectors[task.sel_idx];
    sel.deriv_order = 1;  // gradient bandwidth drives the mean shift
    StudyRecord rec;
    rec.model = cfg.models[task.model_idx];
    rec.selector = method_name(sel.method);
    rec.r = 1;
    rec.rep = task.rep;
    rec.seed = detail::record_seed(cfg.seed, rec.model, rec.selector, 1, task.rep);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const LabeledSample sample = sample_cluster_model(models[task.model_idx], cfg.n, rec.seed);
      const Matrix h = select_bandwidth(sample.points, sel).H;
      rec.H = h;
      MeanShiftConfig ms;
      ms.H = h;
      ms.alpha_pct = cfg.alpha_pct;
      const Partition part = correct_insignificant(sample.points, ms, sel);
      rec.ari = adjusted_rand_index(part.labels, sample.labels);
      rec.n_clusters = static_cast<int>(part.modes.size());
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.records[t] = std::move(rec);
  });
  detail::sort_records(out.records);

  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& rec : out.records)
    if (rec.error.empty() && rec.ari) groups[{rec.model, rec.selector}].push_back(*rec.ari);
  std::ostringstream s;
  s << "model,selector,count,mean_ari,q05,q25,q50,q75,q95\n";
  for (const auto& [key, vals] : groups) {
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    const auto q = detail::quantiles(vals);
    s << key.first << ',' << key.second << ',' << vals.size() << ',' << format_double(mean);
    for (double v : q) s << ',' << format_double(v);
    s << "\n";
  }
  out.summary_csv = s.str();
  return out;
}

//! Deterministic record serialization: one JSON object per line, fixed key
//! order, no runtimes (those go to the timing sidecar).
inline std::string records_to_ndjson(const std::vector<StudyRecord>& records) {
  std::ostringstream os;
  for (const auto& rec : records) {
    Json j;
    j["schema"] = kSchemaVersion;
    j["model"] = rec.model;
    j["selector"] = rec.selector;
    j["r"] = rec.r;
    j["rep"] = rec.rep;
    j["seed"] = rec.seed;
    if (rec.H.size() > 0) j["H"] = matrix_to_json(rec.H);
    if (rec.ise) j["ise"] = *rec.ise;
    if (rec.ari) j["ari"] = *rec.ari;
    if (rec.n_clusters) j["n_clusters"] = *rec.n_clusters;
    if (!rec.error.empty()) j["error"] = rec.error;
    os << j.dump() << "\n";
  }
  return os.str();
}

inline void write_study_result(const StudyResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/records.ndjson", std::ios::binary);
    f << records_to_ndjson(result.records);
  }
  {
    std::ofstream f(dir + "/summary.csv", std::ios::binary);
    f << result.summary_csv;
  }
  {
    // wall-clock sidecar; deliberately outside the determinism guarantee
    std::ofstream f(dir + "/timings.csv", std::ios::binary);
    f << "model,selector,r,rep,runtime_s\n";
    for (const auto& rec : result.records)
      f << rec.model << ',' << rec.selector << ',' << rec.r << ',' << rec.rep << ','
        << format_double(rec.runtime_s) << "\n";
  }
}

//! Record loader; rejects schema mismatches.
inline std::vector<Json> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open records file: " + path);
  std::vector<Json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json j = Json::parse(line);
    if (!j.contains("schema") || j.at("schema").get<std::string>() != kSchemaVersion)
      throw std::runtime_error("records file: schema version mismatch");
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace kdd
