// dampedlab: run | compare | rates
//
// Exit codes: 0 ok, 2 config error, 3 a per-alpha failure (or other error).

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dampedlab/lab.hpp"

using namespace dampedlab;

namespace {

struct Overrides {
  int grid_n = 0;
  double tol_rel = 0.0;
  long long seed = -1;
  std::string out_dir;
};

void apply(ScenarioConfig& c, const Overrides& o) {
  if (o.grid_n > 0) {
    if (o.grid_n < 16 || (o.grid_n & (o.grid_n - 1)) != 0) {
      throw ConfigError("--grid-n must be a power of two >= 16");
    }
    c.grid_n = o.grid_n;
  }
  if (o.tol_rel > 0.0) {
    c.tolerances.ode_rel = o.tol_rel;
    c.tolerances.quad_rel = o.tol_rel;
  }
  if (o.seed >= 0) c.seed = std::uint64_t(o.seed);
  if (!o.out_dir.empty()) redirect_outputs(c, o.out_dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Characteristic and spectral experiments for damped stagnation-point flows"};
  app.require_subcommand(1);
  Overrides ov;
  app.add_option("--grid-n", ov.grid_n, "override grid_n");
  app.add_option("--tol-rel", ov.tol_rel, "override ode_rel and quad_rel");
  app.add_option("--seed", ov.seed, "override seed");
  app.add_option("--out-dir", ov.out_dir, "write outputs under this directory");

  std::string config_path;
  auto* run = app.add_subcommand("run", "run a scenario, write CSV time series and summary JSON");
  run->add_option("config", config_path, "scenario JSON")->required();

  double horizon = 0.5;
  auto* cmp = app.add_subcommand("compare", "characteristic vs spectral discrepancies");
  cmp->add_option("config", config_path, "scenario JSON")->required();
  cmp->add_option("--horizon", horizon, "fraction of the blowup time")->required();

  std::string csv_path, model = "phi1_log";
  auto* rates = app.add_subcommand("rates", "fit an asymptotic rate model to a time series");
  rates->add_option("timeseries", csv_path, "CSV written by run")->required();
  rates->add_option("--model", model,
                    "min_label_rate | generic_label_rate | phi1_log | moment_inverse");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ScenarioConfig c = load_config(config_path);
      apply(c, ov);
      const RunSummary s = run_scenario(c);
      for (const AlphaRecord& r : s.records) {
        std::printf("alpha=%s (%s) regime=%s T_est=%s%s%s\n", r.label.c_str(), detail::fmt(r.alpha).c_str(),
                    r.regime.c_str(), r.T_est ? std::to_string(*r.T_est).c_str() : "-",
                    r.error.empty() ? "" : " error: ", r.error.c_str());
      }
      std::printf("summary: %s\n", c.outputs.summary_json.c_str());
      return s.all_ok() ? 0 : 3;
    }
    if (*cmp) {
      ScenarioConfig c = load_config(config_path);
      apply(c, ov);
      const OracleReport rep = compare_oracles(c, horizon);
      std::cout << to_json(rep).dump(2) << '\n';
      for (const AlphaRecord& r : rep.records)
        if (!r.error.empty()) return 3;
      return 0;
    }
    const RateResult f = fit_rates(csv_path, parse_rate_model(model));
    std::printf("model=%s constant=%.17g r2=%.17g samples=%zu\n", model.c_str(), f.constant, f.r2,
                f.samples);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 3;
  }
}
