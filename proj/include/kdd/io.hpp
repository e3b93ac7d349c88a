#pragma once

#include "kdd/mixture.hpp"
#include "kdd/selector.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kdd {

using Json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "kdd/1";

//! CSV failure with 1-based row/column coordinates for the offending cell.
struct CsvError : std::runtime_error {
  CsvError(const std::string& msg, std::size_t row_, std::size_t col_)
      : std::runtime_error(msg + " (row " + std::to_string(row_) + ", col " + std::to_string(col_) +
                           ")"),
        row(row_),
        col(col_) {}
  std::size_t row, col;
};

struct CsvTable {
  std::vector<std::string> header;  // empty when no header row was present
  Matrix values;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool parse_cell(const std::string& cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

inline std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace detail

//! Comma-separated numeric table; a non-numeric first row is treated as the
//! header. Scientific notation accepted; ragged rows and non-numeric data
//! cells raise CsvError with coordinates.
inline CsvTable read_csv(std::istream& in) {
  CsvTable out;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  bool first_data_row = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_row(line);
    if (first_data_row && lineno == 1) {
      bool all_numeric = true;
      double v;
      for (const auto& c : cells)
        if (!detail::parse_cell(c, v)) {
          all_numeric = false;
          break;
        }
      if (!all_numeric) {
        for (const auto& c : cells) out.header.push_back(detail::trim(c));
        width = cells.size();
        continue;
      }
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw CsvError("ragged row: expected " + std::to_string(width) + " cells, got " +
                         std::to_string(cells.size()),
                     lineno, cells.size());
    std::vector<double> vals(width);
    for (std::size_t c = 0; c < width; ++c)
      if (!detail::parse_cell(cells[c], vals[c]))
        throw CsvError("non-numeric cell '" + detail::trim(cells[c]) + "'", lineno, c + 1);
    rows.push_back(std::move(vals));
    first_data_row = false;
  }
  if (rows.empty()) throw CsvError("no data rows", lineno, 1);
  out.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j)
      out.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return out;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);
  return read_csv(in);
}

//! Shortest exact decimal form of a double, for byte-stable outputs.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& out, const Matrix& values,
                      const std::vector<std::string>& header = {}) {
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j)
      out << header[j] << (j + 1 < header.size() ? "," : "\n");
  }
  for (Index i = 0; i < values.rows(); ++i)
    for (Index j = 0; j < values.cols(); ++j)
      out << format_double(values(i, j)) << (j + 1 < values.cols() ? "," : "\n");
}

// ---- JSON codecs ----

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix JSON: array of rows expected");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (static_cast<Index>(j.at(i).size()) != cols)
      throw std::invalid_argument("matrix JSON: ragged rows");
    for (Index c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

inline Vector vector_from_json(const Json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

inline Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

//! Mixture schema: {"d": 2, "components": [{"weight": w, "mean": [...],
//! "cov": [[...], ...]}, ...]}.
inline NormalMixture mixture_from_json(const Json& j) {
  if (!j.contains("components")) throw std::invalid_argument("mixture JSON: 'components' missing");
  std::vector<MixtureComponent> cs;
  for (const auto& c : j.at("components"))
    cs.push_back({c.at("weight").get<double>(), vector_from_json(c.at("mean")),
                  matrix_from_json(c.at("cov"))});
  NormalMixture f(std::move(cs));
  if (j.contains("d") && j.at("d").get<Index>() != f.dim())
    throw std::invalid_argument("mixture JSON: 'd' disagrees with component dimension");
  return f;
}

inline Json mixture_to_json(const NormalMixture& f) {
  Json out;
  out["d"] = f.dim();
  Json comps = Json::array();
  for (const auto& c : f.components()) {
    Json jc;
    jc["weight"] = c.weight;
    jc["mean"] = vector_to_json(c.mean);
    jc["cov"] = matrix_to_json(c.cov);
    comps.push_back(std::move(jc));
  }
  out["components"] = std::move(comps);
  return out;
}

//! Cluster-model schema: {"kind": "crescent-mixture"|"normal-mixture",
//! "components": [{"weight": w, "type": "normal"|"crescent"|"half-crescent",
//! ...shape fields...}]}. Built-in names: 4-crescent, broken-ring, eye.
inline ClusterModel cluster_model_from_json(const Json& j, const std::string& name = "config") {
  if (!j.contains("components"))
    throw std::invalid_argument("cluster model JSON: 'components' missing");
  std::vector<ClusterComponent> cs;
  for (const auto& c : j.at("components")) {
    const double w = c.at("weight").get<double>();
    const std::string type = c.value("type", std::string("normal"));
    if (type == "normal") {
      cs.push_back({w, NormalComponent{vector_from_json(c.at("mean")), matrix_from_json(c.at("cov"))}});
    } else if (type == "crescent") {
      CrescentComponent cc;
      const Vector center = vector_from_json(c.at("center"));
      if (center.size() != 2) throw std::invalid_argument("crescent center must be 2-d");
      cc.center = Eigen::Vector2d(center[0], center[1]);
      cc.radius = c.at("radius").get<double>();
      cc.convexity = c.at("convexity").get<int>();
      cc.rotated = c.value("rotated", false);
      cs.push_back({w, cc});
    } else if (type == "half-crescent") {
      cs.push_back({w, HalfCrescentComponent{c.at("angle").get<double>()}});
    } else {
      throw std::invalid_argument("cluster model JSON: unknown component type '" + type + "'");
    }
  }
  return ClusterModel(name, std::move(cs));
}

inline SelectorConfig selector_config_from_json(const Json& j) {
  SelectorConfig cfg;
  const std::string m = j.at("method").get<std::string>();
  if (m == "nr") cfg.method = Method::NR;
  else if (m == "cv") cfg.method = Method::CV;
  else if (m == "pi") cfg.method = Method::PI;
  else if (m == "scv") cfg.method = Method::SCV;
  else if (m == "or" || m == "oracle") cfg.method = Method::OR;
  else throw std::invalid_argument("selector JSON: unknown method '" + m + "'");
  cfg.deriv_order = j.value("r", 0);
  cfg.stages = j.value("stages", 2);
  cfg.prescale = j.value("prescale", true);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    cfg.optimizer.max_evals = o.value("max_evals", 0L);
    cfg.optimizer.objective_tol = o.value("objective_tol", 1e-8);
    cfg.optimizer.simplex_init_scale = o.value("simplex_init_scale", 0.1);
    cfg.optimizer.restarts = o.value("restarts", 2);
  }
  return cfg;
}

inline Json selector_result_to_json(const SelectorResult& res, Method method, int r) {
  Json out;
  out["schema"] = kSchemaVersion;
  out["method"] = method_name(method);
  out["r"] = r;
  out["H"] = matrix_to_json(res.H);
  Json pilots = Json::array();
  for (const auto& g : res.pilots) pilots.push_back(matrix_to_json(g));
  out["pilots"] = std::move(pilots);
  out["criterion_value"] = res.criterion_value;
  out["evaluations"] = res.evaluations;
  out["converged"] = res.converged;
  out["warnings"] = res.warnings;
  return out;
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open JSON file: " + path);
  Json j;
  in >> j;
  return j;
}

}  // namespace kdd
