#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dampedlab/lab.hpp"

using namespace dampedlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dampedlab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json part2_config(const fs::path& dir, json alphas) {
  return {{"name", "p2"},
          {"system", "part2"},
          {"alpha_list", alphas},
          {"t_end", 5.0},
          {"tolerances", {{"event_tol", 1e-6}}},
          {"outputs",
           {{"timeseries_csv", (dir / "p2_{alpha}.csv").string()},
            {"summary_json", (dir / "p2.json").string()}}}};
}

int cli(const std::string& args) {
  const int rc = std::system((std::string(DAMPEDLAB_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, Rejections) {
  const fs::path dir = scratch("cfg");
  json j = part2_config(dir, json::array());
  EXPECT_THROW(parse_config(j), ConfigError);
  j["alpha_list"] = {-0.1};
  EXPECT_THROW(parse_config(j), ConfigError);
  j["alpha_list"] = {"sort_of_critical"};
  EXPECT_THROW(parse_config(j), ConfigError);
  j["alpha_list"] = {0.1};
  j["grid_n"] = 48;
  EXPECT_THROW(parse_config(j), ConfigError);
  j["grid_n"] = 64;
  j["system"] = "navier_stokes";
  EXPECT_THROW(parse_config(j), ConfigError);
  j["system"] = "euler";
  j["gamma0"] = "cos(2*pi*x)";
  j["rho0"] = "x";
  EXPECT_THROW(parse_config(j), ConfigError);
  j["rho0"] = "0";
  j.erase("outputs");
  EXPECT_THROW(parse_config(j), ConfigError);
  EXPECT_THROW(load_config((dir / "missing.json").string()), ConfigError);
}

TEST(Config, Part2Defaults) {
  const ScenarioConfig c = parse_config(part2_config(scratch("def"), {0, "critical"}));
  EXPECT_EQ(c.system, System::Part2);
  EXPECT_EQ(c.gamma0, "cos(4*pi*x)");
  EXPECT_EQ(c.rho0, "-sin(2*pi*x)^2");
  ASSERT_EQ(c.alpha_list.size(), 2u);
  EXPECT_EQ(*c.alpha_list[0].value, 0.0);
  EXPECT_EQ(c.alpha_list[1].critical_multiple, 1.0);
}

TEST(Config, ShippedScenariosParse) {
  for (const char* f : {"part2.json", "euler_trichotomy.json", "bouss_stretch.json",
                        "spectral_euler.json"})
    EXPECT_NO_THROW(load_config(std::string(DAMPEDLAB_SCENARIOS) + "/" + f)) << f;
}

TEST(Scenario, Part2AndDeterminism) {
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const RunSummary s = run_scenario(parse_config(part2_config(a, {0, 0.25})));
  ASSERT_TRUE(s.all_ok());
  ASSERT_EQ(s.records.size(), 2u);
  EXPECT_EQ(s.records[0].kind, "J_to_zero");
  EXPECT_NEAR(*s.records[0].T_est, 2.0, 1e-3);
  EXPECT_LE(*s.records[1].T_est, 4 * std::log(2.0));
  EXPECT_NEAR(*s.records[1].T_bound, 4 * std::log(2.0), 1e-12);
  for (const AlphaRecord& r : s.records) EXPECT_LE(r.invariants.norm_err, 10 * r.tol.quad_rel);

  const Timeseries ts = read_csv((a / "p2_0.25.csv").string());
  EXPECT_GT(ts.rows.size(), 10u);
  EXPECT_EQ(ts.columns.front(), "t");
  const json j = json::parse(slurp(a / "p2.json"));
  EXPECT_EQ(j["records"].size(), 2u);

  run_scenario(parse_config(part2_config(b, {0, 0.25})));
  for (const char* f : {"p2_0.csv", "p2_0.25.csv"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  // summaries differ only in the output paths they record
  std::string sa = slurp(a / "p2.json"), sb = slurp(b / "p2.json");
  for (std::string* t : {&sa, &sb})
    for (const std::string& dir : {a.string(), b.string()})
      for (std::size_t at; (at = t->find(dir)) != std::string::npos;) t->replace(at, dir.size(), "DIR");
  EXPECT_EQ(sa, sb);
}

TEST(Scenario, OneBadAlphaDoesNotStopTheOthers) {
  // compare needs a blowup time; part2 with alpha = 0.6 has none before t_end
  const ScenarioConfig c = parse_config(part2_config(scratch("iso"), {0, 0.6}));
  const OracleReport rep = compare_oracles(c, 0.25);
  ASSERT_EQ(rep.records.size(), 2u);
  EXPECT_TRUE(rep.records[0].error.empty()) << rep.records[0].error;
  ASSERT_TRUE(rep.records[0].oracle);
  EXPECT_LE(rep.records[0].oracle->gamma, 1e-4);
  EXPECT_FALSE(rep.records[1].error.empty());
  EXPECT_THROW(compare_oracles(c, 0.0), InvalidParams);
  EXPECT_THROW(compare_oracles(c, 1.0), InvalidParams);
}

TEST(Rates, SpectralSeriesHasNoWindow) {
  const fs::path dir = scratch("spec");
  const json j = {{"name", "sp"},
                  {"system", "spectral"},
                  {"gamma0", "cos(2*pi*x)*cos(2*pi*y)"},
                  {"alpha_list", {0.1}},
                  {"grid_n", 16},
                  {"t_end", 0.1},
                  {"outputs",
                   {{"timeseries_csv", (dir / "sp_{alpha}.csv").string()},
                    {"summary_json", (dir / "sp.json").string()}}}};
  const RunSummary s = run_scenario(parse_config(j));
  ASSERT_TRUE(s.all_ok());
  EXPECT_EQ(s.records[0].regime, "smooth");
  EXPECT_THROW(fit_rates((dir / "sp_0.1.csv").string(), RateModel::Phi1Log), InsufficientWindow);
  EXPECT_THROW(parse_rate_model("cubic"), InvalidParams);
}

TEST(Rates, SyntheticLogSlope) {
  // phi1 = c (-ln s) + b over twelve decades
  Timeseries ts;
  ts.columns = detail::csv_columns(1, 1);
  for (int k = 0; k <= 240; ++k) {
    const double s = std::pow(10.0, -12.0 * k / 240.0);
    std::vector<double> row(ts.columns.size(), 0.0);
    row[ts.col("s")] = s;
    row[ts.col("phi1")] = 0.3 * -std::log(s) + 1.0;
    ts.rows.push_back(row);
  }
  const RateResult f = fit_rates(ts, RateModel::Phi1Log);
  EXPECT_NEAR(f.constant, 0.3, 1e-12);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  {
    std::ofstream(dir / "ok.json") << part2_config(dir, {0.25}).dump();
    std::ofstream(dir / "bad.json") << part2_config(dir, json::array()).dump();
    std::ofstream(dir / "iso.json") << part2_config(dir, {0, 0.6}).dump();
    std::ofstream(dir / "flat.csv") << "t,s,phi1\n0,1,1\n1,0.5,1.1\n";
  }
  EXPECT_EQ(cli("run " + (dir / "ok.json").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "p2.json"));
  EXPECT_EQ(cli("--out-dir " + (dir / "moved").string() + " run " + (dir / "ok.json").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "moved" / "p2_0.25.csv"));
  EXPECT_EQ(cli("run " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(cli("--grid-n 48 run " + (dir / "ok.json").string()), 2);
  EXPECT_EQ(cli("compare " + (dir / "iso.json").string() + " --horizon 0.25"), 3);
  EXPECT_EQ(cli("rates " + (dir / "p2_0.25.csv").string() + " --model phi1_log"), 0);
  EXPECT_EQ(cli("rates " + (dir / "flat.csv").string() + " --model phi1_log"), 3);
  EXPECT_NE(cli("frobnicate"), 0);
}
