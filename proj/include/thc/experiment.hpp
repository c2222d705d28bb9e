#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "thc/coulomb.hpp"
#include "thc/error.hpp"
#include "thc/factorization.hpp"
#include "thc/interpolative.hpp"
#include "thc/model.hpp"
#include "thc/parallel.hpp"

namespace thc::bench {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// Above this N, "auto" error evaluation samples pairs instead of visiting all N^2.
inline constexpr Index kFullMetricsMaxOrbitals = 128;

struct ExperimentConfig {
  int dim = 1;
  int points_per_axis = 1024;
  Index N = 128;
  int num_modes = 128;
  double amplitude = 100.0;
  std::vector<double> epsilons{1e-5};
  int r = kDefaultOversampling;
  std::uint64_t seed = 1;
  /// "full", "sampled" or "auto".
  std::string error_mode = "auto";
  Index sample_count = 1000;
  std::uint64_t sample_seed = 1;
  std::string output_path = "results";
  bool include_baseline = false;
  /// Orbital counts swept at points_per_axis (scaling, compare-df).
  std::vector<Index> N_list;
  /// Grid sizes swept at N (scaling).
  std::vector<int> points_per_axis_list;

  void validate() const {
    detail::require(dim == 1 || dim == 3, "config: dim must be 1 or 3");
    detail::require(points_per_axis >= 2 && points_per_axis % 2 == 0, "config: points_per_axis must be even and >= 2");
    detail::require(N >= 1, "config: N must be >= 1");
    detail::require(num_modes >= 0, "config: num_modes must be >= 0");
    detail::require(std::isfinite(amplitude), "config: amplitude must be finite");
    detail::require(!epsilons.empty(), "config: epsilon list is empty");
    for (const double e : epsilons) detail::require(e > 0.0 && e < 1.0, "config: epsilon must lie in (0, 1)");
    detail::require(r >= 1, "config: r must be >= 1");
    detail::require(error_mode == "full" || error_mode == "sampled" || error_mode == "auto",
                    "config: error_mode must be full, sampled or auto");
    detail::require(sample_count >= 1, "config: sample_count must be >= 1");
    for (const Index v : N_list) detail::require(v >= 1, "config: N_list entries must be >= 1");
    for (const int m : points_per_axis_list)
      detail::require(m >= 2 && m % 2 == 0, "config: points_per_axis_list entries must be even and >= 2");
  }
};

inline ExperimentConfig config_from_json(const json& j) {
  detail::require(j.is_object(), "config: top level must be a JSON object");
  static const std::set<std::string> known{"dim",        "points_per_axis", "N",           "num_modes",
                                           "amplitude",  "epsilon",         "r",           "seed",
                                           "error_mode", "sample_count",    "sample_seed", "output_path",
                                           "include_baseline", "N_list",    "points_per_axis_list"};
  for (const auto& [key, value] : j.items())
    detail::require(known.count(key) == 1, "config: unknown key '" + key + "'");

  ExperimentConfig c;
  try {
    c.dim = j.value("dim", c.dim);
    c.points_per_axis = j.value("points_per_axis", c.points_per_axis);
    c.N = j.value("N", c.N);
    c.num_modes = j.value("num_modes", c.num_modes);
    c.amplitude = j.value("amplitude", c.amplitude);
    if (j.contains("epsilon")) {
      const auto& e = j.at("epsilon");
      c.epsilons = e.is_array() ? e.get<std::vector<double>>() : std::vector<double>{e.get<double>()};
    }
    c.r = j.value("r", c.r);
    c.seed = j.value("seed", c.seed);
    c.error_mode = j.value("error_mode", c.error_mode);
    c.sample_count = j.value("sample_count", c.sample_count);
    c.sample_seed = j.value("sample_seed", c.seed);
    c.output_path = j.value("output_path", c.output_path);
    c.include_baseline = j.value("include_baseline", c.include_baseline);
    c.N_list = j.value("N_list", c.N_list);
    c.points_per_axis_list = j.value("points_per_axis_list", c.points_per_axis_list);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  return json{{"dim", c.dim},
              {"points_per_axis", c.points_per_axis},
              {"N", c.N},
              {"num_modes", c.num_modes},
              {"amplitude", c.amplitude},
              {"epsilon", c.epsilons},
              {"r", c.r},
              {"seed", c.seed},
              {"error_mode", c.error_mode},
              {"sample_count", c.sample_count},
              {"sample_seed", c.sample_seed},
              {"output_path", c.output_path},
              {"include_baseline", c.include_baseline},
              {"N_list", c.N_list},
              {"points_per_axis_list", c.points_per_axis_list}};
}

/// THC_SEED, when set, replaces the config seed (and the default sample seed).
inline void apply_environment(ExperimentConfig& c) {
  const char* value = std::getenv("THC_SEED");
  if (value == nullptr || *value == '\0') return;
  char* end = nullptr;
  const auto parsed = std::strtoull(value, &end, 10);
  detail::require(end != nullptr && *end == '\0', "THC_SEED must be an unsigned integer");
  c.seed = parsed;
  c.sample_seed = parsed;
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  detail::require(static_cast<bool>(in), "config: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("config: " + path.string() + ": " + e.what());
  }
  auto c = config_from_json(j);
  apply_environment(c);
  return c;
}

// ---------------------------------------------------------------------------
// Result rows

struct ResultRow {
  int dim = 1;
  int m = 0;
  Index n = 0;
  Index N = 0;
  double epsilon = 0.0;
  int r = 0;
  std::uint64_t seed = 0;
  Index N_aux = 0;
  double max_e2 = 0.0;
  double max_ec = 0.0;
  double rel_2_error = 0.0;
  double rel_c_error = 0.0;
  double time_compress_s = 0.0;
  std::optional<double> time_baseline_s;
  // JSON-only fields.
  int num_modes = 0;
  double amplitude = 0.0;
  std::string error_mode;
  Index pairs_evaluated = 0;
  double imag_relative = 0.0;
  StageTimings stage_timings;
  std::string timestamp;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> columns{
      "dim",   "m",      "n",      "N",           "epsilon",     "r",               "seed",
      "N_aux", "max_e2", "max_ec", "rel_2_error", "rel_c_error", "time_compress_s", "time_baseline_s"};
  return columns;
}

inline std::string format_double(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

inline std::string csv_line(const ResultRow& row) {
  std::ostringstream out;
  out << row.dim << ',' << row.m << ',' << row.n << ',' << row.N << ',' << format_double(row.epsilon) << ','
      << row.r << ',' << row.seed << ',' << row.N_aux << ',' << format_double(row.max_e2) << ','
      << format_double(row.max_ec) << ',' << format_double(row.rel_2_error) << ','
      << format_double(row.rel_c_error) << ',' << format_double(row.time_compress_s) << ',';
  if (row.time_baseline_s) out << format_double(*row.time_baseline_s);
  return out.str();
}

inline std::string csv_header() {
  std::string header;
  for (const auto& c : csv_columns()) header += (header.empty() ? "" : ",") + c;
  return header;
}

/// Parses one data line written by csv_line. JSON-only fields stay default.
inline ResultRow row_from_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream stream(line);
  std::string cell;
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  detail::require(cells.size() == csv_columns().size(), "row_from_csv: wrong number of fields");
  ResultRow row;
  try {
    row.dim = std::stoi(cells[0]);
    row.m = std::stoi(cells[1]);
    row.n = std::stoll(cells[2]);
    row.N = std::stoll(cells[3]);
    row.epsilon = std::stod(cells[4]);
    row.r = std::stoi(cells[5]);
    row.seed = std::stoull(cells[6]);
    row.N_aux = std::stoll(cells[7]);
    row.max_e2 = std::stod(cells[8]);
    row.max_ec = std::stod(cells[9]);
    row.rel_2_error = std::stod(cells[10]);
    row.rel_c_error = std::stod(cells[11]);
    row.time_compress_s = std::stod(cells[12]);
    if (!cells[13].empty()) row.time_baseline_s = std::stod(cells[13]);
  } catch (const std::logic_error&) {
    throw InvalidArgument("row_from_csv: malformed field in '" + line + "'");
  }
  return row;
}

inline json row_to_json(const ResultRow& row) {
  return json{{"dim", row.dim},
              {"m", row.m},
              {"n", row.n},
              {"N", row.N},
              {"epsilon", row.epsilon},
              {"r", row.r},
              {"seed", row.seed},
              {"N_aux", row.N_aux},
              {"max_e2", row.max_e2},
              {"max_ec", row.max_ec},
              {"rel_2_error", row.rel_2_error},
              {"rel_c_error", row.rel_c_error},
              {"time_compress_s", row.time_compress_s},
              {"time_baseline_s", row.time_baseline_s ? json(*row.time_baseline_s) : json(nullptr)},
              {"num_modes", row.num_modes},
              {"amplitude", row.amplitude},
              {"error_mode", row.error_mode},
              {"pairs_evaluated", row.pairs_evaluated},
              {"imag_relative", row.imag_relative},
              {"stage_timings", row.stage_timings},
              {"timestamp", row.timestamp}};
}

inline ResultRow row_from_json(const json& j) {
  ResultRow row;
  try {
    row.dim = j.at("dim").get<int>();
    row.m = j.at("m").get<int>();
    row.n = j.at("n").get<Index>();
    row.N = j.at("N").get<Index>();
    row.epsilon = j.at("epsilon").get<double>();
    row.r = j.at("r").get<int>();
    row.seed = j.at("seed").get<std::uint64_t>();
    row.N_aux = j.at("N_aux").get<Index>();
    row.max_e2 = j.at("max_e2").get<double>();
    row.max_ec = j.at("max_ec").get<double>();
    row.rel_2_error = j.at("rel_2_error").get<double>();
    row.rel_c_error = j.at("rel_c_error").get<double>();
    row.time_compress_s = j.at("time_compress_s").get<double>();
    if (!j.at("time_baseline_s").is_null()) row.time_baseline_s = j.at("time_baseline_s").get<double>();
    row.num_modes = j.at("num_modes").get<int>();
    row.amplitude = j.at("amplitude").get<double>();
    row.error_mode = j.at("error_mode").get<std::string>();
    row.pairs_evaluated = j.at("pairs_evaluated").get<Index>();
    row.imag_relative = j.at("imag_relative").get<double>();
    row.stage_timings = j.at("stage_timings").get<StageTimings>();
    row.timestamp = j.at("timestamp").get<std::string>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("row_from_json: ") + e.what());
  }
  return row;
}

enum class OutputFormat { csv, json, both };

inline OutputFormat parse_format(const std::string& s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  if (s == "both") return OutputFormat::both;
  throw InvalidArgument("--format must be csv, json or both");
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
}

/// Rewrites results.csv / results.json with every row so far.
inline void write_results(const std::vector<ResultRow>& rows, const fs::path& dir, OutputFormat format) {
  fs::create_directories(dir);
  if (format != OutputFormat::json) {
    std::string text = csv_header() + "\n";
    for (const auto& row : rows) text += csv_line(row) + "\n";
    write_text(dir / "results.csv", text);
  }
  if (format != OutputFormat::csv) {
    json array = json::array();
    for (const auto& row : rows) array.push_back(row_to_json(row));
    write_text(dir / "results.json", array.dump(2) + "\n");
  }
}

// ---------------------------------------------------------------------------
// Slopes and plot data

/// Least-squares slope of log(y) against log(x); nullopt with fewer than two
/// distinct positive x values.
inline std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require(x.size() == y.size(), "loglog_slope: size mismatch");
  std::vector<std::pair<double, double>> pts;
  for (std::size_t k = 0; k < x.size(); ++k)
    if (x[k] > 0.0 && y[k] > 0.0) pts.emplace_back(std::log(x[k]), std::log(y[k]));
  if (pts.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (const auto& [a, b] : pts) {
    mx += a;
    my += b;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [a, b] : pts) {
    sxx += (a - mx) * (a - mx);
    sxy += (a - mx) * (b - my);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

enum class PlotKind { naux_vs_N, time_vs_N };

/// Reference curve through the first data point: y0 * f(x) / f(x0).
inline std::vector<double> reference_curve(const std::vector<double>& x, double y0, double (*shape)(double)) {
  std::vector<double> out;
  const double f0 = shape(x.front());
  for (const double v : x)
    out.push_back(f0 != 0.0 ? y0 * shape(v) / f0 : std::numeric_limits<double>::quiet_NaN());
  return out;
}

inline double shape_linear(double N) { return N; }
inline double shape_n2logn(double N) { return N * N * std::log(N); }
inline double shape_cubic(double N) { return N * N * N; }

inline std::string plot_csv(const std::string& x_name, const std::string& y_name, const std::string& ref_name,
                            const std::vector<double>& x, const std::vector<double>& y,
                            const std::vector<double>& ref) {
  std::string text = x_name + "," + y_name + "," + ref_name + "\n";
  for (std::size_t k = 0; k < x.size(); ++k) {
    text += format_double(x[k]) + "," + format_double(y[k]) + ",";
    if (std::isfinite(ref[k])) text += format_double(ref[k]);
    text += "\n";
  }
  return text;
}

/// Two-column curve files with a reference column normalized through the
/// first point: linear for N_aux, N^2 log N (compress) and N^3 (baseline)
/// for timings. Rows are sorted by N. Returns the files written.
inline std::vector<fs::path> emit_plot_data(std::vector<ResultRow> rows, PlotKind kind, const fs::path& dir) {
  detail::require(!rows.empty(), "emit_plot_data: no rows");
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) { return a.N < b.N; });
  fs::create_directories(dir);
  std::vector<double> N;
  for (const auto& row : rows) N.push_back(static_cast<double>(row.N));
  std::vector<fs::path> written;

  if (kind == PlotKind::naux_vs_N) {
    std::vector<double> naux;
    for (const auto& row : rows) naux.push_back(static_cast<double>(row.N_aux));
    const auto path = dir / "plot_naux_vs_N.csv";
    write_text(path, plot_csv("N", "N_aux", "ref_linear", N, naux, reference_curve(N, naux.front(), shape_linear)));
    written.push_back(path);
    return written;
  }

  std::vector<double> compress;
  for (const auto& row : rows) compress.push_back(row.time_compress_s);
  auto path = dir / "plot_time_compress_vs_N.csv";
  write_text(path, plot_csv("N", "time_s", "ref_N2logN", N, compress,
                            reference_curve(N, compress.front(), shape_n2logn)));
  written.push_back(path);

  const bool have_baseline =
      std::all_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.time_baseline_s.has_value(); });
  if (have_baseline) {
    std::vector<double> baseline;
    for (const auto& row : rows) baseline.push_back(*row.time_baseline_s);
    path = dir / "plot_time_baseline_vs_N.csv";
    write_text(path,
               plot_csv("N", "time_s", "ref_N3", N, baseline, reference_curve(N, baseline.front(), shape_cubic)));
    written.push_back(path);
  }
  return written;
}

// ---------------------------------------------------------------------------
// Commands

struct RunContext {
  fs::path out_dir;
  OutputFormat format = OutputFormat::both;
  std::ostream* log = nullptr;
};

struct CommandResult {
  std::vector<ResultRow> rows;
  json summary;
  std::vector<std::string> warnings;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

namespace internal {

inline ErrorMode resolve_error_mode(const ExperimentConfig& c, Index N) {
  const bool full = c.error_mode == "full" || (c.error_mode == "auto" && N <= kFullMetricsMaxOrbitals);
  if (full) return ErrorMode::full();
  return ErrorMode::sampled(std::min(c.sample_count, N * N), c.sample_seed);
}

inline void note(const RunContext& ctx, const std::string& message) {
  if (ctx.log) *ctx.log << message << std::endl;
}

/// Orbitals for one grid: the lowest `max_orbitals` eigenfunctions.
struct System {
  PeriodicGrid grid;
  OrbitalSet orbitals;
  KernelSpec kernel;
  double solve_seconds = 0.0;
};

inline System build_system(const ExperimentConfig& c, int points_per_axis, Index max_orbitals) {
  System s;
  s.grid = build_grid(c.dim, points_per_axis);
  detail::require(max_orbitals <= s.grid.n, "config: N exceeds the number of grid points");
  const Potential potential = random_potential(s.grid, c.num_modes, c.amplitude, c.seed);
  Stopwatch clock;
  s.orbitals = solve_orbitals(s.grid, potential, max_orbitals);
  s.solve_seconds = clock.seconds();
  s.kernel = kernel_multiplier(s.grid);
  return s;
}

/// compress -> THC core -> metrics (-> baseline) for one (orbitals, epsilon).
inline ResultRow evaluate(const ExperimentConfig& c, const System& system, const OrbitalSet& orbitals, double epsilon,
                          bool baseline, CommandResult& result) {
  const InterpolativeBasis basis = compress(orbitals, epsilon, c.r, c.seed);
  ResultRow row;
  row.dim = c.dim;
  row.m = system.grid.points_per_axis;
  row.n = system.grid.n;
  row.N = orbitals.count();
  row.epsilon = epsilon;
  row.r = c.r;
  row.seed = c.seed;
  row.N_aux = basis.n_aux;
  row.time_compress_s = compress_seconds(basis);
  row.num_modes = c.num_modes;
  row.amplitude = c.amplitude;
  row.imag_relative = basis.imag_relative;
  if (basis.imag_warning()) {
    std::ostringstream w;
    w << "warning: N=" << row.N << " n=" << row.n << " epsilon=" << epsilon
      << ": interpolation matrix imaginary part " << basis.imag_relative << " (relative) was discarded";
    result.warnings.push_back(w.str());
  }

  Stopwatch clock;
  const THCCore core = thc_core_matrix(system.kernel, basis);
  const double core_seconds = clock.seconds();

  const ErrorMode mode = resolve_error_mode(c, row.N);
  const ErrorReport report = error_metrics(orbitals, basis, system.kernel, mode);
  row.error_mode = mode.kind == ErrorMode::Kind::full ? "full" : "sampled";
  row.pairs_evaluated = report.pairs_evaluated;
  row.max_e2 = report.max_e2;
  row.max_ec = report.max_ec;
  row.rel_2_error = report.rel_2_error;
  row.rel_c_error = report.rel_c_error;
  row.stage_timings = report.stage_timings;
  row.stage_timings.insert(basis.timings.begin(), basis.timings.end());
  row.stage_timings["core"] = core_seconds;
  row.stage_timings["orbitals"] = system.solve_seconds;
  (void)core;

  if (baseline) {
    const DfResult df = df_least_squares(orbitals, basis, false);
    row.time_baseline_s = df.seconds;
    row.stage_timings["baseline"] = df.seconds;
  }
  row.timestamp = utc_timestamp();
  return row;
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace internal

/// One system, one row per epsilon.
inline CommandResult cmd_run(const ExperimentConfig& c, const RunContext& ctx) {
  c.validate();
  CommandResult result;
  const auto system = internal::build_system(c, c.points_per_axis, c.N);
  internal::note(ctx, "orbitals: n=" + std::to_string(system.grid.n) + " N=" + std::to_string(c.N) + " (" +
                        std::to_string(system.solve_seconds) + " s)");
  for (const double epsilon : c.epsilons) {
    result.rows.push_back(internal::evaluate(c, system, system.orbitals, epsilon, c.include_baseline, result));
    write_results(result.rows, ctx.out_dir, ctx.format);
    const auto& row = result.rows.back();
    internal::note(ctx, "epsilon=" + format_double(epsilon) + " N_aux=" + std::to_string(row.N_aux) +
                          " rel_2=" + format_double(row.rel_2_error) + " rel_c=" + format_double(row.rel_c_error));
  }
  result.summary = json{{"command", "run"}, {"config", config_to_json(c)}};
  return result;
}

/// Consecutive N_aux ratios of rows sorted by N.
inline std::vector<double> naux_ratios(std::vector<ResultRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) { return a.N < b.N; });
  std::vector<double> ratios;
  for (std::size_t k = 1; k < rows.size(); ++k)
    ratios.push_back(static_cast<double>(rows[k].N_aux) / static_cast<double>(rows[k - 1].N_aux));
  return ratios;
}

/// Sweep N at fixed grid and grid size at fixed N (first epsilon), fit
/// log-log slopes of compress time.
inline CommandResult cmd_scaling(const ExperimentConfig& c, const RunContext& ctx) {
  c.validate();
  CommandResult result;
  const double epsilon = c.epsilons.front();
  const std::vector<Index> N_list = c.N_list.empty() ? std::vector<Index>{c.N} : c.N_list;
  const std::vector<int> m_list =
      c.points_per_axis_list.empty() ? std::vector<int>{c.points_per_axis} : c.points_per_axis_list;
  if (N_list.size() + m_list.size() < 3)
    result.warnings.push_back("warning: fewer than three sweep sizes; slopes may be missing");

  std::vector<ResultRow> n_sweep_rows, N_sweep_rows;
  {
    const Index max_N = *std::max_element(N_list.begin(), N_list.end());
    const auto system = internal::build_system(c, c.points_per_axis, max_N);
    for (const Index N : N_list) {
      N_sweep_rows.push_back(internal::evaluate(c, system, system.orbitals.leading(N), epsilon, false, result));
      result.rows.push_back(N_sweep_rows.back());
      write_results(result.rows, ctx.out_dir, ctx.format);
      internal::note(ctx, "N=" + std::to_string(N) + " N_aux=" + std::to_string(N_sweep_rows.back().N_aux) +
                            " t=" + format_double(N_sweep_rows.back().time_compress_s));
    }
  }
  for (const int m : m_list) {
    const auto system = internal::build_system(c, m, c.N);
    n_sweep_rows.push_back(internal::evaluate(c, system, system.orbitals, epsilon, false, result));
    result.rows.push_back(n_sweep_rows.back());
    write_results(result.rows, ctx.out_dir, ctx.format);
    internal::note(ctx, "n=" + std::to_string(system.grid.n) + " N_aux=" + std::to_string(n_sweep_rows.back().N_aux) +
                          " t=" + format_double(n_sweep_rows.back().time_compress_s));
  }

  std::vector<double> xN, tN, xn, tn;
  for (const auto& row : N_sweep_rows) {
    xN.push_back(static_cast<double>(row.N));
    tN.push_back(row.time_compress_s);
  }
  for (const auto& row : n_sweep_rows) {
    xn.push_back(static_cast<double>(row.n));
    tn.push_back(row.time_compress_s);
  }
  json ratio_table = json::array();
  const auto ratios = naux_ratios(N_sweep_rows);
  for (std::size_t k = 0; k < ratios.size(); ++k) ratio_table.push_back(ratios[k]);

  result.summary = json{{"command", "scaling"},
                        {"epsilon", epsilon},
                        {"slope_time_vs_N", internal::optional_json(loglog_slope(xN, tN))},
                        {"slope_time_vs_n", internal::optional_json(loglog_slope(xn, tn))},
                        {"naux_ratios", ratio_table},
                        {"config", config_to_json(c)}};
  fs::create_directories(ctx.out_dir);
  write_text(ctx.out_dir / "scaling_summary.json", result.summary.dump(2) + "\n");
  emit_plot_data(N_sweep_rows, PlotKind::naux_vs_N, ctx.out_dir);
  emit_plot_data(N_sweep_rows, PlotKind::time_vs_N, ctx.out_dir);
  return result;
}

/// Smallest N from which the baseline is at least as slow as compress for
/// every larger N of the sweep.
inline std::optional<Index> crossover_N(std::vector<ResultRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) { return a.N < b.N; });
  std::optional<Index> found;
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (!it->time_baseline_s || *it->time_baseline_s < it->time_compress_s) break;
    found = it->N;
  }
  return found;
}

/// Compress vs least-squares fitting time over N at fixed grid.
inline CommandResult cmd_compare_df(const ExperimentConfig& c, const RunContext& ctx) {
  c.validate();
  CommandResult result;
  const double epsilon = c.epsilons.front();
  std::vector<Index> N_list = c.N_list.empty() ? std::vector<Index>{c.N} : c.N_list;
  std::sort(N_list.begin(), N_list.end());
  const auto system = internal::build_system(c, c.points_per_axis, N_list.back());
  for (const Index N : N_list) {
    result.rows.push_back(internal::evaluate(c, system, system.orbitals.leading(N), epsilon, true, result));
    write_results(result.rows, ctx.out_dir, ctx.format);
    const auto& row = result.rows.back();
    internal::note(ctx, "N=" + std::to_string(N) + " N_aux=" + std::to_string(row.N_aux) +
                          " compress=" + format_double(row.time_compress_s) +
                          " baseline=" + format_double(*row.time_baseline_s));
  }

  // Slopes over the largest three sizes.
  const std::size_t first = result.rows.size() > 3 ? result.rows.size() - 3 : 0;
  std::vector<double> x, tc, tb;
  for (std::size_t k = first; k < result.rows.size(); ++k) {
    x.push_back(static_cast<double>(result.rows[k].N));
    tc.push_back(result.rows[k].time_compress_s);
    tb.push_back(*result.rows[k].time_baseline_s);
  }
  const auto crossing = crossover_N(result.rows);
  result.summary = json{{"command", "compare-df"},
                        {"epsilon", epsilon},
                        {"slope_compress_vs_N", internal::optional_json(loglog_slope(x, tc))},
                        {"slope_baseline_vs_N", internal::optional_json(loglog_slope(x, tb))},
                        {"crossover_N", crossing ? json(*crossing) : json(nullptr)},
                        {"config", config_to_json(c)}};
  fs::create_directories(ctx.out_dir);
  write_text(ctx.out_dir / "compare_df_summary.json", result.summary.dump(2) + "\n");
  emit_plot_data(result.rows, PlotKind::naux_vs_N, ctx.out_dir);
  emit_plot_data(result.rows, PlotKind::time_vs_N, ctx.out_dir);
  return result;
}

}  // namespace thc::bench
