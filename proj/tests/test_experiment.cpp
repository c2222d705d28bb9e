#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "thc/experiment.hpp"

using namespace thc;
using namespace thc::bench;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("thc_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream s(text);
  std::string line;
  while (std::getline(s, line)) out.push_back(line);
  return out;
}

ResultRow without_timings(ResultRow row) {
  row.time_compress_s = 0.0;
  if (row.time_baseline_s) row.time_baseline_s = 0.0;
  row.stage_timings.clear();
  row.timestamp.clear();
  return row;
}

ResultRow sample_row() {
  ResultRow r;
  r.dim = 1;
  r.m = 1024;
  r.n = 1024;
  r.N = 128;
  r.epsilon = 1e-5;
  r.r = 20;
  r.seed = 18446744073709551615ULL;
  r.N_aux = 300;
  r.max_e2 = 1.4771234567890123e-7;
  r.max_ec = 9.154e-6;
  r.rel_2_error = 6.806e-6 / 3.0;
  r.rel_c_error = 1.051e-5;
  r.time_compress_s = 0.1 + 0.2;
  r.num_modes = 128;
  r.amplitude = 0.3;
  r.error_mode = "full";
  r.pairs_evaluated = 16384;
  r.imag_relative = 0.02;
  r.stage_timings = {{"qr", 0.25}, {"sketch", 0.05}};
  r.timestamp = "2026-01-01T00:00:00Z";
  return r;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.points_per_axis = 128;
  c.N = 8;
  c.num_modes = 16;
  c.amplitude = 1.0;
  c.epsilons = {1e-3, 1e-5};
  c.seed = 3;
  return c;
}

ResultRow row_with(Index N, Index n_aux, double compress, std::optional<double> baseline) {
  ResultRow r;
  r.N = N;
  r.N_aux = n_aux;
  r.time_compress_s = compress;
  r.time_baseline_s = baseline;
  return r;
}

// --- CLI helpers ------------------------------------------------------------

const char* bench_binary() { return std::getenv("THC_BENCH"); }

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string command = env + (env.empty() ? "" : " ") + std::string(bench_binary()) + " " + args +
                              " > /dev/null 2> /dev/null";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

json cli_config() {
  return json{{"dim", 1},       {"points_per_axis", 64}, {"N", 4},     {"num_modes", 8},
              {"amplitude", 1.0}, {"epsilon", {1e-4, 1e-6}}, {"seed", 5}};
}

}  // namespace

// --- configuration ----------------------------------------------------------

TEST(Config, DefaultsAndScalarEpsilon) {
  const auto c = config_from_json(json{{"epsilon", 1e-6}});
  EXPECT_EQ(c.dim, 1);
  EXPECT_EQ(c.points_per_axis, 1024);
  EXPECT_EQ(c.N, 128);
  EXPECT_EQ(c.r, 20);
  EXPECT_EQ(c.epsilons, std::vector<double>{1e-6});
  EXPECT_EQ(c.error_mode, "auto");
  EXPECT_FALSE(c.include_baseline);
}

TEST(Config, RoundTripsThroughJson) {
  auto c = small_config();
  c.N_list = {4, 8};
  c.points_per_axis_list = {64, 128};
  c.include_baseline = true;
  c.error_mode = "sampled";
  c.sample_count = 50;
  c.sample_seed = 9;
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, RejectsInvalidInput) {
  EXPECT_THROW(config_from_json(json{{"bogus", 1}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"dim", 2}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"points_per_axis", 63}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"epsilon", 0.0}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"epsilon", json::array()}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"error_mode", "most"}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"N", "many"}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"r", 0}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json::array()), InvalidArgument);
}

TEST(Config, LoadReportsMissingAndMalformedFiles) {
  const auto dir = scratch_dir("load");
  EXPECT_THROW(load_config(dir / "absent.json"), InvalidArgument);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "bad.json"), InvalidArgument);
}

TEST(Config, SeedEnvironmentOverride) {
  const auto dir = scratch_dir("env");
  const auto path = write_config(dir, cli_config());
  ::unsetenv("THC_SEED");
  EXPECT_EQ(load_config(path).seed, 5u);
  ::setenv("THC_SEED", "1234", 1);
  const auto c = load_config(path);
  EXPECT_EQ(c.seed, 1234u);
  EXPECT_EQ(c.sample_seed, 1234u);
  ::setenv("THC_SEED", "12x", 1);
  EXPECT_THROW(load_config(path), InvalidArgument);
  ::unsetenv("THC_SEED");
}

// --- result rows ------------------------------------------------------------

TEST(ResultRows, CsvHeaderIsTheDocumentedSchema) {
  EXPECT_EQ(csv_header(),
            "dim,m,n,N,epsilon,r,seed,N_aux,max_e2,max_ec,rel_2_error,rel_c_error,time_compress_s,time_baseline_s");
}

TEST(ResultRows, CsvRoundTripIsLossless) {
  auto row = sample_row();
  auto back = row_from_csv(csv_line(row));
  EXPECT_EQ(back.epsilon, row.epsilon);
  EXPECT_EQ(back.rel_2_error, row.rel_2_error);
  EXPECT_EQ(back.time_compress_s, row.time_compress_s);
  EXPECT_EQ(back.seed, row.seed);
  EXPECT_FALSE(back.time_baseline_s.has_value());
  // CSV carries the schema columns; everything else stays at its default.
  ResultRow csv_part = row;
  csv_part.num_modes = 0;
  csv_part.amplitude = 0.0;
  csv_part.error_mode.clear();
  csv_part.pairs_evaluated = 0;
  csv_part.imag_relative = 0.0;
  csv_part.stage_timings.clear();
  csv_part.timestamp.clear();
  EXPECT_EQ(back, csv_part);

  row.time_baseline_s = 1.0 / 3.0;
  EXPECT_EQ(row_from_csv(csv_line(row)).time_baseline_s, row.time_baseline_s);
  EXPECT_THROW(row_from_csv("1,2,3"), InvalidArgument);
  EXPECT_THROW(row_from_csv("a,2,3,4,5,6,7,8,9,10,11,12,13,"), InvalidArgument);
}

TEST(ResultRows, JsonRoundTripIsLossless) {
  auto row = sample_row();
  EXPECT_EQ(row_from_json(json::parse(row_to_json(row).dump())), row);
  row.time_baseline_s = 2.5e-3;
  EXPECT_EQ(row_from_json(json::parse(row_to_json(row).dump())), row);
  EXPECT_THROW(row_from_json(json{{"dim", 1}}), InvalidArgument);
}

TEST(ResultRows, FormatSelection) {
  EXPECT_EQ(parse_format("csv"), OutputFormat::csv);
  EXPECT_EQ(parse_format("json"), OutputFormat::json);
  EXPECT_EQ(parse_format("both"), OutputFormat::both);
  EXPECT_THROW(parse_format("xml"), InvalidArgument);
  const auto dir = scratch_dir("format");
  write_results({sample_row()}, dir / "csv_only", OutputFormat::csv);
  EXPECT_TRUE(fs::exists(dir / "csv_only" / "results.csv"));
  EXPECT_FALSE(fs::exists(dir / "csv_only" / "results.json"));
}

// --- slopes and plot data ---------------------------------------------------

TEST(Slopes, RecoversPowerLaw) {
  const std::vector<double> x{64, 128, 256, 512};
  std::vector<double> y;
  for (const double v : x) y.push_back(3.0 * std::pow(v, 2.5));
  EXPECT_NEAR(*loglog_slope(x, y), 2.5, 1e-12);
  EXPECT_FALSE(loglog_slope({64}, {1.0}).has_value());
  EXPECT_FALSE(loglog_slope({64, 64}, {1.0, 2.0}).has_value());
  EXPECT_THROW(loglog_slope({1, 2}, {1}), InvalidArgument);
}

TEST(PlotData, ThreeRowsThreeLinesAndParallelLinearReference) {
  const auto dir = scratch_dir("plot_naux");
  const std::vector<ResultRow> rows{row_with(256, 512, 4.0, {}), row_with(64, 128, 1.0, {}), row_with(128, 256, 2.0, {})};
  const auto files = emit_plot_data(rows, PlotKind::naux_vs_N, dir);
  ASSERT_EQ(files.size(), 1u);
  const auto lines = lines_of(read_file(dir / "plot_naux_vs_N.csv"));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "N,N_aux,ref_linear");
  EXPECT_EQ(lines[1], "64,128,128");
  EXPECT_EQ(lines[2], "128,256,256");
  EXPECT_EQ(lines[3], "256,512,512");
}

TEST(PlotData, TimingReferencesPassThroughFirstPoint) {
  const auto dir = scratch_dir("plot_time");
  const std::vector<ResultRow> rows{row_with(64, 150, 1.5, 0.5), row_with(128, 290, 5.0, 4.0),
                                    row_with(256, 590, 20.0, 30.0)};
  const auto files = emit_plot_data(rows, PlotKind::time_vs_N, dir);
  ASSERT_EQ(files.size(), 2u);
  const auto compress = lines_of(read_file(dir / "plot_time_compress_vs_N.csv"));
  const auto baseline = lines_of(read_file(dir / "plot_time_baseline_vs_N.csv"));
  ASSERT_EQ(compress.size(), 4u);
  ASSERT_EQ(baseline.size(), 4u);
  EXPECT_EQ(compress[0], "N,time_s,ref_N2logN");
  EXPECT_EQ(baseline[0], "N,time_s,ref_N3");
  EXPECT_EQ(compress[1], "64,1.5,1.5");
  EXPECT_EQ(baseline[1], "64,0.5,0.5");
  const auto cells = [](const std::string& line) {
    std::vector<double> v;
    std::stringstream s(line);
    std::string c;
    while (std::getline(s, c, ',')) v.push_back(std::stod(c));
    return v;
  };
  const double expected_c = 1.5 * (256.0 * 256.0 * std::log(256.0)) / (64.0 * 64.0 * std::log(64.0));
  EXPECT_NEAR(cells(compress[3])[2], expected_c, 1e-12 * expected_c);
  EXPECT_NEAR(cells(baseline[3])[2], 0.5 * 64.0, 1e-12);

  const auto no_baseline = scratch_dir("plot_time_nb");
  EXPECT_EQ(emit_plot_data({row_with(64, 150, 1.5, {})}, PlotKind::time_vs_N, no_baseline).size(), 1u);
  EXPECT_THROW(emit_plot_data({}, PlotKind::naux_vs_N, no_baseline), InvalidArgument);
}

TEST(Summaries, RatiosAndCrossover) {
  const std::vector<ResultRow> rows{row_with(128, 300, 5.0, 4.0), row_with(64, 150, 1.0, 0.5),
                                    row_with(256, 600, 20.0, 30.0), row_with(512, 1200, 80.0, 240.0)};
  const auto ratios = naux_ratios(rows);
  ASSERT_EQ(ratios.size(), 3u);
  EXPECT_DOUBLE_EQ(ratios[0], 2.0);
  EXPECT_EQ(crossover_N(rows), 256);
  EXPECT_FALSE(crossover_N({row_with(64, 150, 1.0, 0.5)}).has_value());
  EXPECT_EQ(crossover_N({row_with(64, 150, 1.0, 2.0)}), 64);
  EXPECT_FALSE(crossover_N({row_with(64, 150, 1.0, {})}).has_value());
}

// --- commands ---------------------------------------------------------------

TEST(CmdRun, SingleOrbitalSmoke) {
  auto c = small_config();
  c.N = 1;
  c.epsilons = {1e-6};
  const auto dir = scratch_dir("run_smoke");
  const auto result = cmd_run(c, RunContext{dir, OutputFormat::both, nullptr});
  ASSERT_EQ(result.rows.size(), 1u);
  EXPECT_EQ(result.rows[0].N_aux, 1);
  EXPECT_LE(result.rows[0].rel_2_error, 1e-10);
  EXPECT_LE(result.rows[0].rel_c_error, 1e-10);
  EXPECT_LE(result.rows[0].max_e2, 1e-10);
  EXPECT_EQ(result.rows[0].error_mode, "full");
  EXPECT_EQ(result.summary["command"], "run");
}

TEST(CmdRun, RowsPerEpsilonWithIncreasingRank) {
  auto c = small_config();
  c.points_per_axis = 256;
  c.N = 16;
  c.epsilons = {1e-4, 1e-5, 1e-6};
  const auto dir = scratch_dir("run_eps");
  const auto result = cmd_run(c, RunContext{dir, OutputFormat::both, nullptr});
  ASSERT_EQ(result.rows.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_LE(result.rows[k].rel_2_error, 10.0 * c.epsilons[k]);
    EXPECT_LE(result.rows[k].rel_c_error, 10.0 * c.epsilons[k]);
    if (k > 0) EXPECT_GT(result.rows[k].N_aux, result.rows[k - 1].N_aux);
    EXPECT_EQ(result.rows[k].pairs_evaluated, 256);
    EXPECT_FALSE(result.rows[k].time_baseline_s.has_value());
    for (const char* stage : {"sketch", "qr", "basis", "core", "metrics", "orbitals"})
      EXPECT_EQ(result.rows[k].stage_timings.count(stage), 1u) << stage;
  }
}

TEST(CmdRun, CsvAndJsonCarryTheSameData) {
  auto c = small_config();
  c.include_baseline = true;
  const auto dir = scratch_dir("run_both");
  const auto result = cmd_run(c, RunContext{dir, OutputFormat::both, nullptr});
  const auto csv = lines_of(read_file(dir / "results.csv"));
  const auto js = json::parse(read_file(dir / "results.json"));
  ASSERT_EQ(csv.size(), 3u);
  ASSERT_EQ(js.size(), 2u);
  EXPECT_EQ(csv[0], csv_header());
  for (std::size_t k = 0; k < 2; ++k) {
    const auto from_json = row_from_json(js[k]);
    EXPECT_EQ(from_json, result.rows[k]);
    EXPECT_EQ(csv_line(from_json), csv[k + 1]);
    EXPECT_TRUE(from_json.time_baseline_s.has_value());
  }
}

TEST(CmdRun, DeterministicModuloTimings) {
  const auto c = small_config();
  const auto a = cmd_run(c, RunContext{scratch_dir("det_a"), OutputFormat::json, nullptr});
  const auto b = cmd_run(c, RunContext{scratch_dir("det_b"), OutputFormat::json, nullptr});
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) EXPECT_EQ(without_timings(a.rows[k]), without_timings(b.rows[k]));
}

TEST(CmdRun, SampledModeForLargeN) {
  auto c = small_config();
  c.N = 20;
  c.error_mode = "sampled";
  c.sample_count = 50;
  c.epsilons = {1e-4};
  const auto result = cmd_run(c, RunContext{scratch_dir("sampled"), OutputFormat::json, nullptr});
  EXPECT_EQ(result.rows[0].error_mode, "sampled");
  EXPECT_EQ(result.rows[0].pairs_evaluated, 50);
}

TEST(CmdScaling, SingleSizeSweepHasNoSlopes) {
  auto c = small_config();
  c.epsilons = {1e-4};
  const auto dir = scratch_dir("scaling_single");
  const auto result = cmd_scaling(c, RunContext{dir, OutputFormat::both, nullptr});
  EXPECT_EQ(result.rows.size(), 2u);  // one N-sweep row and one grid-sweep row
  EXPECT_TRUE(result.summary["slope_time_vs_N"].is_null());
  EXPECT_TRUE(result.summary["slope_time_vs_n"].is_null());
  EXPECT_FALSE(result.warnings.empty());
  EXPECT_TRUE(fs::exists(dir / "scaling_summary.json"));
  EXPECT_TRUE(fs::exists(dir / "plot_naux_vs_N.csv"));
}

TEST(CmdScaling, SweepsBothAxes) {
  auto c = small_config();
  c.epsilons = {1e-4};
  c.N_list = {4, 8, 16};
  c.points_per_axis_list = {64, 128, 256};
  const auto dir = scratch_dir("scaling_sweep");
  const auto result = cmd_scaling(c, RunContext{dir, OutputFormat::csv, nullptr});
  ASSERT_EQ(result.rows.size(), 6u);
  EXPECT_EQ(result.rows[2].N, 16);
  EXPECT_EQ(result.rows[5].n, 256);
  EXPECT_EQ(result.rows[3].N, c.N);
  EXPECT_TRUE(result.summary["slope_time_vs_N"].is_number());
  EXPECT_TRUE(result.summary["slope_time_vs_n"].is_number());
  EXPECT_EQ(result.summary["naux_ratios"].size(), 2u);
  EXPECT_EQ(lines_of(read_file(dir / "results.csv")).size(), 7u);
}

TEST(CmdCompareDf, SingleSizeHasBothTimingsAndNoSlopes) {
  auto c = small_config();
  c.epsilons = {1e-4};
  const auto dir = scratch_dir("compare_single");
  const auto result = cmd_compare_df(c, RunContext{dir, OutputFormat::both, nullptr});
  ASSERT_EQ(result.rows.size(), 1u);
  EXPECT_TRUE(result.rows[0].time_baseline_s.has_value());
  EXPECT_GT(result.rows[0].time_compress_s, 0.0);
  EXPECT_TRUE(result.summary["slope_compress_vs_N"].is_null());
  EXPECT_TRUE(result.summary["slope_baseline_vs_N"].is_null());
  for (const char* f : {"compare_df_summary.json", "plot_naux_vs_N.csv", "plot_time_compress_vs_N.csv",
                        "plot_time_baseline_vs_N.csv", "results.csv", "results.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
}

TEST(CmdCompareDf, SweepReportsSlopes) {
  auto c = small_config();
  c.epsilons = {1e-4};
  c.N_list = {16, 4, 8};
  const auto result = cmd_compare_df(c, RunContext{scratch_dir("compare_sweep"), OutputFormat::json, nullptr});
  ASSERT_EQ(result.rows.size(), 3u);
  EXPECT_EQ(result.rows[0].N, 4);
  EXPECT_TRUE(result.summary["slope_compress_vs_N"].is_number());
  EXPECT_TRUE(result.summary["slope_baseline_vs_N"].is_number());
}

TEST(Commands, RejectInvalidConfig) {
  auto c = small_config();
  c.N = 1000;
  EXPECT_THROW(cmd_run(c, RunContext{scratch_dir("invalid"), OutputFormat::json, nullptr}), InvalidArgument);
}

// --- command-line binary ----------------------------------------------------

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    if (bench_binary() == nullptr) GTEST_SKIP() << "THC_BENCH not set";
  }
};

TEST_F(Cli, RunSucceedsAndWritesOutputs) {
  const auto dir = scratch_dir("cli_run");
  const auto config = write_config(dir, cli_config());
  EXPECT_EQ(run_cli("run --config " + config.string() + " --out " + (dir / "out").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "results.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "results.json"));
}

TEST_F(Cli, FormatFlagSelectsFiles) {
  const auto dir = scratch_dir("cli_format");
  const auto config = write_config(dir, cli_config());
  EXPECT_EQ(run_cli("run --config " + config.string() + " --out " + (dir / "out").string() + " --format json"), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "results.json"));
  EXPECT_FALSE(fs::exists(dir / "out" / "results.csv"));
  EXPECT_EQ(run_cli("run --config " + config.string() + " --format xml"), 1);
}

TEST_F(Cli, ConfigErrorsExitWithOne) {
  const auto dir = scratch_dir("cli_config_error");
  EXPECT_EQ(run_cli("run --config " + (dir / "absent.json").string()), 1);
  auto bad = cli_config();
  bad["unknown_key"] = 1;
  EXPECT_EQ(run_cli("run --config " + write_config(dir, bad).string()), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("run --config " + write_config(dir, cli_config()).string(), "THC_SEED=abc"), 1);
}

TEST_F(Cli, NumericalFailureExitsWithTwo) {
  const auto dir = scratch_dir("cli_numerical");
  auto degenerate = cli_config();
  degenerate["N"] = 1;
  degenerate["num_modes"] = 0;  // constant orbital: zero Coulomb norm
  EXPECT_EQ(run_cli("run --config " + write_config(dir, degenerate).string() + " --out " + (dir / "out").string()), 2);
}

TEST_F(Cli, ThreadsFlagDoesNotChangeResults) {
  const auto dir = scratch_dir("cli_threads");
  const auto config = write_config(dir, cli_config()).string();
  ASSERT_EQ(run_cli("run --config " + config + " --threads 1 --format json --out " + (dir / "t1").string()), 0);
  ASSERT_EQ(run_cli("run --config " + config + " --threads 3 --format json --out " + (dir / "t3").string()), 0);
  const auto a = json::parse(read_file(dir / "t1" / "results.json"));
  const auto b = json::parse(read_file(dir / "t3" / "results.json"));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k)
    EXPECT_EQ(without_timings(row_from_json(a[k])), without_timings(row_from_json(b[k])));
}

TEST_F(Cli, SeedEnvironmentVariableOverridesConfig) {
  const auto dir = scratch_dir("cli_seed");
  const auto config = write_config(dir, cli_config()).string();
  ASSERT_EQ(run_cli("run --config " + config + " --format json --out " + (dir / "s").string(), "THC_SEED=77"), 0);
  const auto rows = json::parse(read_file(dir / "s" / "results.json"));
  EXPECT_EQ(rows[0]["seed"], 77);
}
