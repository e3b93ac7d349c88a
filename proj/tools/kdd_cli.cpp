// Command-line front end: bandwidth selection, density-derivative estimation,
// mean-shift clustering, and the simulation studies.

#include "kdd/estimator.hpp"
#include "kdd/io.hpp"
#include "kdd/meanshift.hpp"
#include "kdd/mise.hpp"
#include "kdd/selector.hpp"
#include "kdd/study.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

using namespace kdd;

int emit_error(const std::string& type, const std::string& message,
               std::optional<std::size_t> row = std::nullopt,
               std::optional<std::size_t> col = std::nullopt) {
  Json j;
  j["error"]["type"] = type;
  j["error"]["message"] = message;
  if (row) j["error"]["row"] = *row;
  if (col) j["error"]["col"] = *col;
  std::cerr << j.dump() << "\n";
  return type == "usage" ? 2 : 1;
}

Method parse_method(const std::string& name) {
  if (name == "nr") return Method::NR;
  if (name == "cv") return Method::CV;
  if (name == "pi") return Method::PI;
  if (name == "scv") return Method::SCV;
  throw CLI::ValidationError("--method", "expected one of nr|cv|pi|scv");
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

void write_text(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open output file: " + path);
  f << content;
}

SelectorResult run_selector(const Matrix& data, Method method, int r, int stages, bool prescale) {
  SelectorConfig cfg;
  cfg.method = method;
  cfg.deriv_order = r;
  cfg.stages = stages;
  cfg.prescale = prescale;
  return select_bandwidth(data, cfg);
}

int cmd_select(const std::string& input, const std::string& method, int r, int stages,
               bool prescale, const std::string& output) {
  const CsvTable table = read_csv_file(input);
  const Method m = parse_method(method);
  const SelectorResult res = run_selector(table.values, m, r, stages, prescale);
  write_text(output, selector_result_to_json(res, m, r).dump(2) + "\n");
  return 0;
}

int cmd_estimate(const std::string& input, int r, const std::string& bandwidth_file,
                 const std::string& method, int stages, const std::string& grid_min,
                 const std::string& grid_max, const std::string& grid_points,
                 const std::string& output, const std::string& bandwidth_out) {
  const CsvTable table = read_csv_file(input);
  const Matrix& data = table.values;
  const Index d = data.cols();

  Matrix h;
  if (!bandwidth_file.empty()) {
    const Json j = load_json_file(bandwidth_file);
    h = matrix_from_json(j.contains("H") ? j.at("H") : j);
  } else {
    const SelectorResult res = run_selector(data, parse_method(method), r, stages, true);
    h = res.H;
    if (!bandwidth_out.empty())
      write_text(bandwidth_out, selector_result_to_json(res, parse_method(method), r).dump(2) + "\n");
  }

  GridSpec grid;
  if (!grid_min.empty() || !grid_max.empty() || !grid_points.empty()) {
    if (grid_min.empty() || grid_max.empty() || grid_points.empty())
      throw CLI::ValidationError("--grid-*", "grid-min, grid-max and grid-points go together");
    const auto lo = parse_doubles(grid_min), hi = parse_doubles(grid_max);
    const auto pts = parse_doubles(grid_points);
    if (static_cast<Index>(lo.size()) != d || static_cast<Index>(hi.size()) != d ||
        static_cast<Index>(pts.size()) != d)
      throw CLI::ValidationError("--grid-*", "per-axis values must match the data dimension");
    grid.lo = Eigen::Map<const Vector>(lo.data(), d);
    grid.hi = Eigen::Map<const Vector>(hi.data(), d);
    for (double p : pts) grid.counts.push_back(static_cast<Index>(p));
  } else {
    grid.lo.resize(d);
    grid.hi.resize(d);
    const Index per_axis = d <= 2 ? 50 : 15;
    for (Index j = 0; j < d; ++j) {
      const double lo = data.col(j).minCoeff(), hi = data.col(j).maxCoeff();
      const double pad = 0.1 * (hi - lo + 1e-12);
      grid.lo[j] = lo - pad;
      grid.hi[j] = hi + pad;
      grid.counts.push_back(per_axis);
    }
  }

  const KdeModel model(data, Bandwidth(h), r);
  const auto values = kde_grid(model, grid);
  const std::size_t vlen = static_cast<std::size_t>(values.front().values.size());

  std::ostringstream os;
  for (Index j = 0; j < d; ++j) os << "x" << j << ",";
  for (std::size_t v = 0; v < vlen; ++v) os << "deriv" << v << (v + 1 < vlen ? "," : "\n");
  for (Index node = 0; node < grid.num_nodes(); ++node) {
    const Vector x = grid.node(node);
    for (Index j = 0; j < d; ++j) os << format_double(x[j]) << ",";
    const auto& dv = values[static_cast<std::size_t>(node)].values;
    for (Index v = 0; v < dv.size(); ++v) os << format_double(dv[v]) << (v + 1 < dv.size() ? "," : "\n");
  }
  write_text(output, os.str());
  return 0;
}

int cmd_cluster(const std::string& input, const std::string& method, int r, double alpha,
                bool no_correct, double tol, int max_iter, double merge_radius,
                const std::string& labels_out, const std::string& modes_out, int stages) {
  const CsvTable table = read_csv_file(input);
  const Matrix& data = table.values;

  SelectorConfig sel;
  sel.method = parse_method(method);
  sel.deriv_order = r;
  sel.stages = stages;
  const SelectorResult bw = select_bandwidth(data, sel);

  MeanShiftConfig cfg;
  cfg.H = bw.H;
  cfg.tol = tol;
  cfg.max_iter = max_iter;
  cfg.merge_radius = merge_radius;
  cfg.alpha_pct = alpha;

  const Partition part = no_correct ? cluster(data, cfg) : correct_insignificant(data, cfg, sel);

  std::ostringstream labels;
  labels << "label\n";
  for (int l : part.labels) labels << l << "\n";
  write_text(labels_out, labels.str());

  Json j;
  j["schema"] = kSchemaVersion;
  j["n_clusters"] = part.modes.size();
  Json modes = Json::array();
  for (const auto& m : part.modes) modes.push_back(vector_to_json(m));
  j["modes"] = std::move(modes);
  j["H"] = matrix_to_json(cfg.H);
  j["correction_rounds"] = part.correction_rounds;
  j["warnings"] = part.warnings;
  write_text(modes_out.empty() ? std::string("-") : modes_out, j.dump(2) + "\n");
  return 0;
}

int cmd_study(const std::string& kind, const std::string& config_path, std::string output) {
  Json j = load_json_file(config_path);
  StudyConfig cfg = study_config_from_json(j);
  if (!cfg.kind.empty() && cfg.kind != kind)
    throw CLI::ValidationError("study", "config kind '" + cfg.kind + "' disagrees with subcommand '" + kind + "'");
  cfg.kind = kind;
  if (!output.empty()) cfg.output_dir = output;
  if (cfg.output_dir.empty()) cfg.output_dir = "study-out";

  const StudyResult result = (kind == "ise") ? run_ise_study(cfg) : run_cluster_study(cfg);
  write_study_result(result, cfg.output_dir);
  std::cout << "wrote " << result.records.size() << " records to " << cfg.output_dir << "\n";
  std::cout << result.summary_csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel density derivative estimation with unconstrained bandwidths"};
  app.require_subcommand(1);

  auto* rates = app.add_subcommand("rates", "print the relative convergence-rate table");

  std::string sel_input, sel_method = "pi", sel_output;
  int sel_r = 0, sel_stages = 2;
  bool sel_no_prescale = false;
  auto* select = app.add_subcommand("select", "choose a bandwidth matrix from CSV data");
  select->add_option("--input,-i", sel_input, "CSV file of observations")->required();
  select->add_option("--method,-m", sel_method, "nr|cv|pi|scv (default pi)");
  select->add_option("--r,-r", sel_r, "derivative order (default 0)");
  select->add_option("--stages", sel_stages, "pilot stages for pi/scv (default 2)");
  select->add_flag("--no-prescale", sel_no_prescale, "skip coordinatewise standardization");
  select->add_option("--output,-o", sel_output, "output JSON path (default stdout)");

  std::string est_input, est_bandwidth, est_method = "pi", est_gmin, est_gmax, est_gpts,
              est_output, est_bw_out;
  int est_r = 0, est_stages = 2;
  auto* estimate = app.add_subcommand("estimate", "evaluate the density-derivative estimate on a grid");
  estimate->add_option("--input,-i", est_input, "CSV file of observations")->required();
  estimate->add_option("--r,-r", est_r, "derivative order (default 0)");
  estimate->add_option("--bandwidth,-H", est_bandwidth, "JSON file with H (skips selection)");
  estimate->add_option("--method,-m", est_method, "selector when no bandwidth is given");
  estimate->add_option("--stages", est_stages, "pilot stages for pi/scv");
  estimate->add_option("--grid-min", est_gmin, "comma-separated per-axis minima");
  estimate->add_option("--grid-max", est_gmax, "comma-separated per-axis maxima");
  estimate->add_option("--grid-points", est_gpts, "comma-separated per-axis node counts");
  estimate->add_option("--output,-o", est_output, "output CSV path (default stdout)");
  estimate->add_option("--bandwidth-out", est_bw_out, "write the selected H as JSON");

  std::string clu_input, clu_method = "pi", clu_labels, clu_modes;
  int clu_r = 1, clu_max_iter = 400, clu_stages = 2;
  double clu_alpha = 5.0, clu_tol = 1e-6, clu_merge = 0.1;
  bool clu_no_correct = false;
  auto* clusterc = app.add_subcommand("cluster", "mean-shift clustering of CSV data");
  clusterc->add_option("--input,-i", clu_input, "CSV file of observations")->required();
  clusterc->add_option("--method,-m", clu_method, "gradient bandwidth selector (default pi)");
  clusterc->add_option("--r,-r", clu_r, "derivative order for the selector (default 1)");
  clusterc->add_option("--alpha", clu_alpha, "insignificant-group threshold percent (default 5)");
  clusterc->add_flag("--no-correct", clu_no_correct, "skip the insignificant-group correction");
  clusterc->add_option("--tol", clu_tol, "convergence tolerance in the H-metric");
  clusterc->add_option("--max-iter", clu_max_iter, "iteration cap per path");
  clusterc->add_option("--merge-radius", clu_merge, "mode merge radius in the H-metric");
  clusterc->add_option("--stages", clu_stages, "pilot stages for pi/scv");
  clusterc->add_option("--labels,-o", clu_labels, "labels CSV path (default stdout)");
  clusterc->add_option("--modes", clu_modes, "modes JSON path (default stdout)");

  std::string study_kind, study_config, study_output;
  auto* study = app.add_subcommand("study", "run a simulation study from a config file");
  study->add_option("kind", study_kind, "ise or cluster")
      ->required()
      ->check(CLI::IsMember({"ise", "cluster"}));
  study->add_option("--config,-c", study_config, "StudyConfig JSON file")->required();
  study->add_option("--output,-o", study_output, "output directory (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    return emit_error("usage", e.what());
  }

  try {
    if (rates->parsed()) {
      std::cout << kdd::format_rate_table();
      return 0;
    }
    if (select->parsed())
      return cmd_select(sel_input, sel_method, sel_r, sel_stages, !sel_no_prescale, sel_output);
    if (estimate->parsed())
      return cmd_estimate(est_input, est_r, est_bandwidth, est_method, est_stages, est_gmin,
                          est_gmax, est_gpts, est_output, est_bw_out);
    if (clusterc->parsed())
      return cmd_cluster(clu_input, clu_method, clu_r, clu_alpha, clu_no_correct, clu_tol,
                         clu_max_iter, clu_merge, clu_labels, clu_modes, clu_stages);
    if (study->parsed()) return cmd_study(study_kind, study_config, study_output);
  } catch (const kdd::CsvError& e) {
    return emit_error("parse", e.what(), e.row, e.col);
  } catch (const CLI::ValidationError& e) {
    return emit_error("usage", e.what());
  } catch (const std::exception& e) {
    return emit_error("error", e.what());
  }
  return emit_error("usage", "no subcommand given");
}
