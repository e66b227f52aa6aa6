#pragma once

// Scenario runner behind tools/dampedlab: JSON configs, per-alpha runs,
// CSV time series, summary JSON, oracle comparison and rate fits.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dampedlab/bouss_char.hpp"
#include "dampedlab/closedform.hpp"
#include "dampedlab/euler_char.hpp"
#include "dampedlab/fit.hpp"
#include "dampedlab/spectral_ref.hpp"

namespace dampedlab {

using json = nlohmann::json;

enum class System { Euler, Boussinesq, Spectral, Part2 };

inline const char* to_string(System s) {
  switch (s) {
    case System::Euler: return "euler";
    case System::Boussinesq: return "boussinesq";
    case System::Spectral: return "spectral";
    default: return "part2";
  }
}

// Either a number or one of half_critical / critical / twice_critical.
struct AlphaSpec {
  std::string label;
  std::optional<double> value;
  double critical_multiple = NAN;
};

struct Outputs {
  std::string timeseries_csv;  // "{alpha}" is replaced by the alpha label
  std::string summary_json;
  std::string snapshots;       // directory; empty = none
};

struct ScenarioConfig {
  std::string name;
  System system = System::Euler;
  std::string gamma0, rho0 = "0";
  std::vector<AlphaSpec> alpha_list;
  int grid_n = 64;
  Tolerances tolerances;
  Outputs outputs;
  std::uint64_t seed = 1;
  // optional
  double t_end = 50.0;               // time cap for characteristic runs, spectral end time
  std::vector<double> probe_times;   // spectral output times
  int octaves = 40;                  // Euler tau-series depth, s down to tau* 2^-octaves
};

namespace detail {

inline const char* part2_gamma0 = "cos(4*pi*x)";
inline const char* part2_rho0 = "-sin(2*pi*x)^2";

// Shortest round-trip decimal.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline json num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

inline AlphaSpec parse_alpha(const json& j) {
  AlphaSpec a;
  if (j.is_number()) {
    const double v = j.get<double>();
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("alpha must be finite and >= 0");
    a.value = v;
    a.label = fmt(v);
  } else if (j.is_string()) {
    a.label = j.get<std::string>();
    if (a.label == "half_critical") a.critical_multiple = 0.5;
    else if (a.label == "critical") a.critical_multiple = 1.0;
    else if (a.label == "twice_critical") a.critical_multiple = 2.0;
    else throw ConfigError("unknown symbolic alpha '" + a.label + "'");
  } else {
    throw ConfigError("alpha_list entries must be numbers or symbolic names");
  }
  return a;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline ScenarioConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ScenarioConfig c;
  c.name = detail::get_or<std::string>(j, "name", "");
  if (c.name.empty()) throw ConfigError("missing 'name'");
  const std::string sys = detail::get_or<std::string>(j, "system", "");
  if (sys == "euler") c.system = System::Euler;
  else if (sys == "boussinesq") c.system = System::Boussinesq;
  else if (sys == "spectral") c.system = System::Spectral;
  else if (sys == "part2") c.system = System::Part2;
  else throw ConfigError("system must be euler, boussinesq, spectral or part2, got '" + sys + "'");

  const bool p2 = c.system == System::Part2;
  c.gamma0 = detail::get_or<std::string>(j, "gamma0", p2 ? detail::part2_gamma0 : "");
  c.rho0 = detail::get_or<std::string>(j, "rho0", p2 ? detail::part2_rho0 : "0");
  if (c.gamma0.empty()) throw ConfigError("missing 'gamma0'");
  if (c.system == System::Euler && c.rho0 != "0") {
    throw ConfigError("euler scenarios take rho0 = 0; use boussinesq for nonzero rho0");
  }

  if (!j.contains("alpha_list") || !j.at("alpha_list").is_array()) {
    throw ConfigError("missing 'alpha_list' array");
  }
  for (const json& a : j.at("alpha_list")) c.alpha_list.push_back(detail::parse_alpha(a));
  if (c.alpha_list.empty()) throw ConfigError("alpha_list is empty");

  c.grid_n = detail::get_or<int>(j, "grid_n", c.grid_n);
  if (c.grid_n < 16 || (c.grid_n & (c.grid_n - 1)) != 0) {
    throw ConfigError("grid_n must be a power of two >= 16");
  }
  if (j.contains("tolerances")) {
    const json& t = j.at("tolerances");
    c.tolerances.ode_rel = detail::get_or<double>(t, "ode_rel", c.tolerances.ode_rel);
    c.tolerances.ode_abs = detail::get_or<double>(t, "ode_abs", c.tolerances.ode_abs);
    c.tolerances.quad_rel = detail::get_or<double>(t, "quad_rel", c.tolerances.quad_rel);
    c.tolerances.event_tol = detail::get_or<double>(t, "event_tol", c.tolerances.event_tol);
  }
  const Tolerances& t = c.tolerances;
  if (!(t.ode_rel > 0 && t.ode_abs > 0 && t.quad_rel > 0 && t.event_tol > 0)) {
    throw ConfigError("tolerances must be positive");
  }
  if (!j.contains("outputs") || !j.at("outputs").is_object()) throw ConfigError("missing 'outputs'");
  const json& o = j.at("outputs");
  c.outputs.timeseries_csv = detail::get_or<std::string>(o, "timeseries_csv", "");
  c.outputs.summary_json = detail::get_or<std::string>(o, "summary_json", "");
  c.outputs.snapshots = detail::get_or<std::string>(o, "snapshots", "");
  if (c.outputs.timeseries_csv.empty() || c.outputs.summary_json.empty()) {
    throw ConfigError("outputs need timeseries_csv and summary_json");
  }
  c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed);
  c.t_end = detail::get_or<double>(j, "t_end", c.t_end);
  if (!(c.t_end > 0.0)) throw ConfigError("t_end must be positive");
  c.probe_times = detail::get_or<std::vector<double>>(j, "probe_times", {});
  if (!std::is_sorted(c.probe_times.begin(), c.probe_times.end())) {
    throw ConfigError("probe_times must be increasing");
  }
  c.octaves = detail::get_or<int>(j, "octaves", c.octaves);
  if (c.octaves < 4 || c.octaves > 48) throw ConfigError("octaves must be in [4, 48]");
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

// Puts every output file under dir, keeping only the file names.
inline void redirect_outputs(ScenarioConfig& c, const std::string& dir) {
  namespace fs = std::filesystem;
  auto move = [&dir](std::string& p) {
    if (!p.empty()) p = (fs::path(dir) / fs::path(p).filename()).string();
  };
  move(c.outputs.timeseries_csv);
  move(c.outputs.summary_json);
  move(c.outputs.snapshots);
}

// ---- time series ----------------------------------------------------------

// One CSV table: header plus rows of doubles.
struct Timeseries {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t col(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw InvalidParams("timeseries has no column '" + name + "'");
    return std::size_t(it - columns.begin());
  }
  std::vector<double> column(const std::string& name) const {
    const std::size_t k = col(name);
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r[k]);
    return v;
  }
};

inline void write_csv(const Timeseries& ts, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  for (std::size_t k = 0; k < ts.columns.size(); ++k) out << (k ? "," : "") << ts.columns[k];
  out << '\n';
  for (const auto& r : ts.rows) {
    for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << detail::fmt(r[k]);
    out << '\n';
  }
}

inline Timeseries read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParams("cannot open " + path);
  Timeseries ts;
  std::string line;
  if (!std::getline(in, line)) throw InvalidParams(path + " is empty");
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) ts.columns.push_back(c);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) r.push_back(std::strtod(c.c_str(), nullptr));
    if (r.size() != ts.columns.size()) throw InvalidParams(path + ": ragged row");
    ts.rows.push_back(std::move(r));
  }
  return ts;
}

namespace detail {

// t, tau, sigma, A, phi1, J_<watch>..., gamma_min, gamma_max, bkm_partial,
// then s (distance to the singular tau), inv_d2 = Int D^-2, norm_err.
inline std::vector<std::string> csv_columns(std::size_t n_min, std::size_t n_gen) {
  std::vector<std::string> c{"t", "tau", "sigma", "A", "phi1"};
  for (std::size_t k = 0; k < n_min; ++k) c.push_back("J_min" + std::to_string(k));
  for (std::size_t k = 0; k < n_gen; ++k) c.push_back("J_gen" + std::to_string(k));
  for (const char* s : {"gamma_min", "gamma_max", "bkm_partial", "s", "inv_d2", "norm_err"})
    c.push_back(s);
  return c;
}

}  // namespace detail

// ---- rate fits --------------------------------------------------------------

enum class RateModel { MinLabelRate, GenericLabelRate, Phi1Log, MomentInverse };

inline const char* to_string(RateModel m) {
  switch (m) {
    case RateModel::MinLabelRate: return "min_label_rate";
    case RateModel::GenericLabelRate: return "generic_label_rate";
    case RateModel::Phi1Log: return "phi1_log";
    default: return "moment_inverse";
  }
}

inline RateModel parse_rate_model(const std::string& s) {
  for (RateModel m : {RateModel::MinLabelRate, RateModel::GenericLabelRate, RateModel::Phi1Log,
                      RateModel::MomentInverse})
    if (s == to_string(m)) return m;
  throw InvalidParams("unknown rate model '" + s + "'");
}

struct RateResult {
  double constant = NAN;
  double r2 = NAN;
  std::size_t samples = 0;
};

// Least squares over the final decade of s = tau* - tau:
//   phi1_log        phi1 = C (-ln s) + c            -> C
//   moment_inverse  Int D^-2 = C / s + c             -> C
//   min_label_rate  s phi1^2 gamma_min -> C, fitted linearly in 1/phi1
//   generic_label_rate  s phi1^3 gamma_max -> C, same
inline RateResult fit_rates(const Timeseries& ts, RateModel model) {
  const std::vector<double> s = ts.column("s"), phi = ts.column("phi1");
  double s_min = INFINITY, s_max = 0.0;
  for (double v : s)
    if (v > 0.0 && std::isfinite(v)) {
      s_min = std::min(s_min, v);
      s_max = std::max(s_max, v);
    }
  if (!(s_min <= 1e-8 * s_max)) {
    throw InsufficientWindow("series never approaches the singular tau (no blowup bracket)");
  }
  std::vector<double> x, y;
  const std::vector<double> other = model == RateModel::MomentInverse  ? ts.column("inv_d2")
                                    : model == RateModel::MinLabelRate ? ts.column("gamma_min")
                                    : model == RateModel::GenericLabelRate ? ts.column("gamma_max")
                                                                           : phi;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!(s[k] > 0.0 && s[k] <= 10.0 * s_min) || !std::isfinite(phi[k])) continue;
    switch (model) {
      case RateModel::Phi1Log:
        x.push_back(-std::log(s[k]));
        y.push_back(phi[k]);
        break;
      case RateModel::MomentInverse:
        x.push_back(1.0 / s[k]);
        y.push_back(other[k]);
        break;
      case RateModel::MinLabelRate:
        x.push_back(1.0 / phi[k]);
        y.push_back(s[k] * phi[k] * phi[k] * other[k]);
        break;
      case RateModel::GenericLabelRate:
        x.push_back(1.0 / phi[k]);
        y.push_back(s[k] * phi[k] * phi[k] * phi[k] * other[k]);
        break;
    }
  }
  if (x.size() < 20) {
    throw InsufficientWindow(std::to_string(x.size()) + " samples in the final decade, need 20");
  }
  const LineFit f = fit_line(x, y);
  const bool limit = model == RateModel::MinLabelRate || model == RateModel::GenericLabelRate;
  return {limit ? f.intercept : f.slope, f.r2, x.size()};
}

inline RateResult fit_rates(const std::string& csv_path, RateModel model) {
  return fit_rates(read_csv(csv_path), model);
}

// Slope bracket for phi1 ~ C (-ln s): C lies between |m0| sum 2 pi / lambda1
// and |m0| sum 2 pi / lambda2 over the minima (lambda1 >= lambda2).
inline std::array<double, 2> phi1_slope_bracket(const InitialData& d) {
  double lo = 0.0, hi = 0.0;
  for (const HessianEigs& e : d.hessian_eigs()) {
    lo += 2.0 * std::numbers::pi / e.lambda1;
    hi += 2.0 * std::numbers::pi / e.lambda2;
  }
  const double m = std::abs(d.m0());
  return {m * lo, m * hi};
}

// ---- summaries -------------------------------------------------------------

struct InvariantMaxima {
  double norm_err = NAN;    // worst |Int J - 1|
  double mean_gamma = NAN;  // worst |mean gamma| (spectral)
  double min_phi1 = NAN;
  double max_sigma = NAN;
};

struct OracleDiscrepancy {
  int n = 0;
  double horizon = NAN;
  double gamma = 0.0, rho = 0.0, J = 0.0;
  double J_closed = NAN;  // part2 data: worst |J_char - closed form|
  double spectral_mean = 0.0, spectral_omega = 0.0;  // worst |mean gamma|, sup|omega|
};

struct AlphaRecord {
  std::string label;
  double alpha = NAN;
  std::string regime;  // blowup, nontrivial_steady, trivial_steady, no_blowup, smooth
  std::string kind;    // J_to_zero, J_to_infinity, none (characteristic Boussinesq runs)
  std::optional<double> T_est;
  std::optional<std::array<double, 2>> bracket;
  std::optional<double> T_bound;  // Euler formula or the part2 closed-form bound
  std::map<std::string, RateResult> rate_fit;
  std::map<std::string, std::string> rate_fit_errors;
  InvariantMaxima invariants;
  std::optional<OracleDiscrepancy> oracle;
  std::string timeseries;
  std::string error;
  Tolerances tol;
};

struct RunSummary {
  std::string name;
  System system = System::Euler;
  std::string gamma0, rho0;
  int grid_n = 0;
  std::uint64_t seed = 0;
  std::optional<double> TE;
  std::vector<AlphaRecord> records;

  bool all_ok() const {
    return std::all_of(records.begin(), records.end(),
                       [](const AlphaRecord& r) { return r.error.empty(); });
  }
};

inline json to_json(const Tolerances& t) {
  return {{"ode_rel", t.ode_rel}, {"ode_abs", t.ode_abs}, {"quad_rel", t.quad_rel},
          {"event_tol", t.event_tol}};
}

inline json to_json(const AlphaRecord& r) {
  using detail::num;
  json j;
  j["alpha_label"] = r.label;
  j["alpha"] = num(r.alpha);
  j["regime"] = r.regime;
  j["kind"] = r.kind;
  j["T_est"] = num(r.T_est);
  j["bracket"] = r.bracket ? json{num((*r.bracket)[0]), num((*r.bracket)[1])} : json(nullptr);
  j["T_bound"] = num(r.T_bound);
  json fits = json::object();
  for (const auto& [k, f] : r.rate_fit)
    fits[k] = {{"constant", num(f.constant)}, {"r2", num(f.r2)}, {"samples", f.samples}};
  for (const auto& [k, e] : r.rate_fit_errors) fits[k] = {{"error", e}};
  j["rate_fit"] = fits;
  j["invariant_maxima"] = {{"norm_err", num(r.invariants.norm_err)},
                           {"mean_gamma", num(r.invariants.mean_gamma)},
                           {"min_phi1", num(r.invariants.min_phi1)},
                           {"max_sigma", num(r.invariants.max_sigma)}};
  if (r.oracle) {
    const OracleDiscrepancy& o = *r.oracle;
    j["oracle_discrepancies"] = {{"n", o.n},           {"horizon", num(o.horizon)},
                                 {"gamma", num(o.gamma)}, {"rho", num(o.rho)},
                                 {"J", num(o.J)},         {"J_closed", num(o.J_closed)}};
  } else {
    j["oracle_discrepancies"] = nullptr;
  }
  j["timeseries"] = r.timeseries;
  j["error"] = r.error.empty() ? json(nullptr) : json(r.error);
  j["tolerances"] = to_json(r.tol);
  return j;
}

inline json to_json(const RunSummary& s) {
  json j;
  j["name"] = s.name;
  j["system"] = to_string(s.system);
  j["gamma0"] = s.gamma0;
  j["rho0"] = s.rho0;
  j["grid_n"] = s.grid_n;
  j["seed"] = s.seed;
  j["T_E"] = detail::num(s.TE);
  j["records"] = json::array();
  for (const AlphaRecord& r : s.records) j["records"].push_back(to_json(r));
  return j;
}

// ---- runners ---------------------------------------------------------------

namespace detail {

struct Watch {
  std::vector<Point2> minima, generic;
  std::vector<Point2> all() const {
    std::vector<Point2> a = minima;
    a.insert(a.end(), generic.begin(), generic.end());
    return a;
  }
};

inline Watch make_watch(const InitialData& d, std::uint64_t seed) {
  return {watch_minima(d), generic_labels(seed, 8)};
}

inline std::string series_path(const ScenarioConfig& c, const std::string& label) {
  namespace fs = std::filesystem;
  std::string p = c.outputs.timeseries_csv;
  const auto at = p.find("{alpha}");
  if (at != std::string::npos) return p.replace(at, 7, label);
  const fs::path path(p);
  return (path.parent_path() / (path.stem().string() + "_" + label + path.extension().string()))
      .string();
}

inline void ensure_parent(const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path parent = fs::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) fs::create_directories(parent, ec);
  if (ec) throw ConfigError("cannot create " + parent.string() + ": " + ec.message());
}

inline void fit_all(const Timeseries& ts, AlphaRecord& r) {
  for (RateModel m : {RateModel::MinLabelRate, RateModel::GenericLabelRate, RateModel::Phi1Log,
                      RateModel::MomentInverse}) {
    try {
      r.rate_fit[to_string(m)] = fit_rates(ts, m);
    } catch (const Error& e) {
      r.rate_fit_errors[to_string(m)] = e.what();
    }
  }
}

// Octave samples of s plus a dense final decade for the rate fits.
inline std::vector<double> euler_s_grid(double tau_star, int octaves) {
  std::vector<double> s = geometric_s(tau_star, octaves - 4, 1);
  const double s_end = tau_star * std::exp2(-double(octaves));
  const double s_top = s.back();
  const int dense = 32;
  for (int k = 1; k <= dense; ++k) s.push_back(s_top * std::pow(s_end / s_top, double(k) / dense));
  return s;
}

inline void append_euler_rows(Timeseries& ts, const EulerSeries& es, std::size_t n_watch) {
  for (const EulerSample& e : es.samples) {
    std::vector<double> row{e.t, e.tau, 0.0, NAN, e.phi1};
    for (std::size_t k = 0; k < n_watch; ++k) row.push_back(e.J_watch[k]);
    for (double v : {e.gamma_min, e.gamma_max, e.bkm_partial, e.s, e.inv_d2, e.norm_err})
      row.push_back(v);
    ts.rows.push_back(std::move(row));
  }
}

inline void run_euler_alpha(const ScenarioConfig& c, const InitialData& d,
                            const std::shared_ptr<const TimeTable>& table, AlphaRecord& r,
                            Timeseries& ts) {
  const Tolerances& tol = c.tolerances;
  const Watch w = make_watch(d, c.seed);
  const std::vector<Point2> labels = w.all();
  const TimeMaps maps = with_alpha(d, table, r.alpha);
  if (!std::isfinite(maps.TE)) throw UndampedNoBlowup("T^E is infinite: " + maps.diagnostic);

  if (r.alpha == 0.0) {
    r.regime = to_string(Regime::Blowup);
    r.T_est = maps.TE;
    r.T_bound = maps.TE;
  } else {
    const RegimeReport rep = classify_regime(d, r.alpha, maps, tol.event_tol, labels, tol.quad_rel);
    r.regime = to_string(rep.regime);
    if (rep.T_blowup) {
      r.T_bound = rep.T_blowup;
      // direct integration in t, independent of the tau-space time map
      const OdeSolution sol = solve_tau_alpha(d, r.alpha, std::min(c.t_end, 2.0 * *rep.T_blowup), tol);
      if (sol.status().kind == Terminal::BlowupBracketed) {
        r.bracket = std::array<double, 2>{sol.status().t_lo, sol.status().t_hi};
        r.T_est = 0.5 * (sol.status().t_lo + sol.status().t_hi);
      }
    }
  }

  EulerSeries es = euler_tau_series(d, maps, euler_s_grid(d.tau_star(), c.octaves), labels,
                                    tol.quad_rel);
  if (r.regime == to_string(Regime::TrivialSteady)) {
    // approach tau_1, where 1 - alpha t^E = 0, through decay levels 10^-k
    std::vector<double> s_tail;
    for (int k = 1; k <= 8; ++k) s_tail.push_back(d.tau_star() - tau_at_decay(maps, std::pow(10.0, -k)));
    std::vector<double> s_keep;
    const double s_last = es.samples.empty() ? INFINITY : es.samples.back().s;
    for (double s : s_tail)
      if (s < s_last) s_keep.push_back(s);
    EulerSeries tail = euler_tau_series(d, maps, s_keep, labels, tol.quad_rel);
    for (EulerSample& e : tail.samples) {
      if (!es.samples.empty()) {
        const EulerSample& p = es.samples.back();
        e.bkm_partial = p.bkm_partial + 0.5 * (e.t - p.t) * (e.sup + p.sup);
      }
      es.samples.push_back(std::move(e));
    }
  }
  append_euler_rows(ts, es, labels.size());
  double worst = 0.0, min_phi = INFINITY;
  for (const EulerSample& e : es.samples) {
    worst = std::max(worst, e.norm_err);
    min_phi = std::min(min_phi, e.phi1);
  }
  r.invariants.norm_err = worst;
  r.invariants.min_phi1 = min_phi;
  r.invariants.max_sigma = 0.0;
  fit_all(ts, r);
}

inline void run_bouss_alpha(const ScenarioConfig& c, const InitialData& d, AlphaRecord& r,
                            Timeseries& ts) {
  const Watch w = make_watch(d, c.seed);
  BoussOptions o;
  o.tol = c.tolerances;
  o.t_end = c.t_end;
  for (const Point2& p : w.minima) {
    o.watch.push_back(p);
    o.generic.push_back(false);
  }
  for (const Point2& p : w.generic) {
    o.watch.push_back(p);
    o.generic.push_back(true);
  }
  const BoussRun run = run_bouss(d, r.alpha, o);
  const double g_ref = d.g_ref();
  for (const BoussStep& st : run.steps) {
    std::vector<double> row{st.s.t, st.s.tau, st.s.sigma, st.s.A, st.s.phi1};
    for (double J : st.J_watch) row.push_back(J);
    const double inv_d2 = st.s.phi1 - st.s.tau * st.Kbar2 + st.s.sigma * st.Lbar2;
    for (double v : {st.gamma_min, st.gamma_max, st.bkm_partial, -st.s.d0 / g_ref, inv_d2,
                     st.norm_err})
      row.push_back(v);
    ts.rows.push_back(std::move(row));
  }
  r.invariants.norm_err = run.worst_norm_err;
  r.invariants.min_phi1 = run.min_phi1;
  r.invariants.max_sigma = run.max_sigma;
  r.kind = to_string(run.estimate.kind);
  if (run.status.kind == Terminal::BlowupBracketed) {
    r.regime = "blowup";
    r.T_est = run.estimate.T_est;
    r.bracket = std::array<double, 2>{run.estimate.t_lo, run.estimate.t_hi};
  } else {
    r.regime = "no_blowup";
  }
  if (run.estimate.rate_fit) {
    r.rate_fit["J_loglog"] = {run.estimate.rate_fit->exponent, run.estimate.rate_fit->r2, 0};
  }
  if (c.system == System::Part2) {
    if (r.alpha < 0.5) r.T_bound = T_alpha_B_formula(r.alpha);
  } else {
    fit_all(ts, r);
  }
}

inline void write_snapshot(const std::string& dir, const std::string& label, int index,
                           const SpectralState& s, std::ofstream& manifest) {
  namespace fs = std::filesystem;
  for (const auto& [name, f] : {std::pair<const char*, const Field*>{"gamma", &s.gamma},
                                {"rho", &s.rho}}) {
    const std::string file = label + "_" + std::to_string(index) + "_" + name + ".bin";
    std::ofstream out(fs::path(dir) / file, std::ios::binary);
    if (!out) throw ConfigError("cannot write snapshot " + file);
    // header: magic, int32 n, double t, 16-byte field name
    char field[16] = {};
    std::snprintf(field, sizeof field, "%s", name);
    const std::int32_t n = s.n;
    out.write("DLSNAP1\n", 8);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&s.t), sizeof s.t);
    out.write(field, sizeof field);
    out.write(reinterpret_cast<const char*>(f->data()), std::streamsize(f->size() * sizeof(double)));
    manifest << file << ' ' << s.n << ' ' << fmt(s.t) << ' ' << name << '\n';
  }
}

inline void run_spectral_alpha(const ScenarioConfig& c, const InitialData& d, AlphaRecord& r,
                               Timeseries& ts) {
  const Watch w = make_watch(d, c.seed);
  const std::vector<Point2> labels = w.all();
  std::vector<double> probes = c.probe_times;
  if (probes.empty())
    for (int k = 1; k <= 10; ++k) probes.push_back(c.t_end * k / 10.0);

  const Fft2 fft(c.grid_n);
  SpectralState s = make_spectral_state(d, c.grid_n, labels);
  const double sup0 = detail::field_sup(s.gamma);
  double worst_mean = std::abs(detail::field_mean(s.gamma));
  std::ofstream manifest;
  if (!c.outputs.snapshots.empty()) {
    std::filesystem::create_directories(c.outputs.snapshots);
    manifest.open(std::filesystem::path(c.outputs.snapshots) / (r.label + "_manifest.txt"));
  }
  auto record = [&](int index) {
    const SpectralDiagnostics dg = diagnostics(s);
    std::vector<double> row{s.t, NAN, NAN, NAN, NAN};
    for (const Tracer& t : s.tracers) row.push_back(t.J);
    for (double v : {dg.min_gamma, dg.sup_gamma, dg.bkm_partial, double(NAN), double(NAN), double(NAN)})
      row.push_back(v);
    ts.rows.push_back(std::move(row));
    if (manifest.is_open()) write_snapshot(c.outputs.snapshots, r.label, index, s, manifest);
  };
  record(0);
  r.regime = "smooth";
  const double h = 1.0 / c.grid_n;
  SpectralOptions so;
  int index = 0;
  try {
    for (double tp : probes) {
      while (s.t < tp) {
        const Velocity v = velocity_from_gamma(fft, s.gamma);
        const double umax = std::max(detail::field_sup(v.u), detail::field_sup(v.v)) * std::sqrt(2.0);
        double dt = std::min(so.dt_max, so.cfl * h / std::max(umax, 1e-12));
        const int left = int(std::ceil((tp - s.t) / dt - 1e-9));
        dt = (tp - s.t) / std::max(left, 1);
        s = step(fft, s, r.alpha, dt);
        if (left <= 1) s.t = tp;
        worst_mean = std::max(worst_mean, std::abs(detail::field_mean(s.gamma)));
        if (detail::field_sup(s.gamma) > so.growth_stop * sup0) {
          r.regime = "halted";
          r.T_est = s.t;
          break;
        }
      }
      record(++index);
      if (r.regime == "halted") break;
    }
  } catch (const NonFinite&) {
    r.regime = "halted";
    r.T_est = s.t;
  }
  r.invariants.mean_gamma = worst_mean;
}

}  // namespace detail

inline RunSummary run_scenario(const ScenarioConfig& c) {
  RunSummary sum;
  sum.name = c.name;
  sum.system = c.system;
  sum.gamma0 = c.gamma0;
  sum.rho0 = c.rho0;
  sum.grid_n = c.grid_n;
  sum.seed = c.seed;

  InitialData d;
  try {
    d = make_initial_data(c.gamma0, c.rho0, c.grid_n,
                          {c.tolerances.quad_rel, c.tolerances.event_tol, false});
  } catch (const Error& e) {
    throw ConfigError(std::string("initial data: ") + e.what());
  }

  // symbolic alphas and Euler runs need the undamped Euler time table
  const bool symbolic = std::any_of(c.alpha_list.begin(), c.alpha_list.end(),
                                    [](const AlphaSpec& a) { return !a.value; });
  std::shared_ptr<const detail::TimeTable> table;
  if (symbolic || c.system == System::Euler) {
    try {
      table = detail::build_time_table(d, {c.tolerances.quad_rel, 48, 0});
    } catch (const Error& e) {
      if (symbolic) throw ConfigError(std::string("symbolic alpha needs T^E: ") + e.what());
    }
    if (table && std::isfinite(table->TE)) sum.TE = table->TE;
    if (symbolic && !sum.TE) throw ConfigError("symbolic alpha needs finite T^E");
  }

  detail::ensure_parent(c.outputs.summary_json);
  detail::ensure_parent(c.outputs.timeseries_csv);
  const detail::Watch w = detail::make_watch(d, c.seed);

  for (const AlphaSpec& a : c.alpha_list) {
    AlphaRecord r;
    r.label = a.label;
    r.tol = c.tolerances;
    r.alpha = a.value ? *a.value : a.critical_multiple / *sum.TE;
    Timeseries ts;
    ts.columns = detail::csv_columns(w.minima.size(), w.generic.size());
    try {
      switch (c.system) {
        case System::Euler: detail::run_euler_alpha(c, d, table, r, ts); break;
        case System::Boussinesq:
        case System::Part2: detail::run_bouss_alpha(c, d, r, ts); break;
        case System::Spectral: detail::run_spectral_alpha(c, d, r, ts); break;
      }
    } catch (const Error& e) {
      r.error = e.what();
    }
    r.timeseries = detail::series_path(c, r.label);
    write_csv(ts, r.timeseries);
    sum.records.push_back(std::move(r));
  }

  std::ofstream out(c.outputs.summary_json, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + c.outputs.summary_json);
  out << to_json(sum).dump(2) << '\n';
  return sum;
}

// ---- oracle comparison -----------------------------------------------------

struct OracleReport {
  std::string name;
  std::vector<AlphaRecord> records;  // label, alpha, T_est, oracle filled
};

inline OracleDiscrepancy compare_at(const InitialData& d, double alpha, double horizon, int n,
                                    const std::vector<Point2>& labels, Tolerances tol,
                                    bool part2) {
  OracleDiscrepancy out;
  out.n = n;
  out.horizon = horizon;
  std::vector<double> probes;
  for (int k = 1; k <= 4; ++k) probes.push_back(horizon * k / 4.0);
  const SpectralRun sr = run_spectral(d, alpha, n, probes, labels);
  if (sr.records.size() != probes.size()) {
    throw NonFinite("spectral run halted before the horizon: " + sr.halt_reason);
  }
  out.spectral_mean = sr.worst_mean;
  out.spectral_omega = sr.worst_omega;
  std::optional<Mu1Path> path;
  if (part2) path = solve_N(alpha, {tol.ode_rel, tol.ode_abs, tol.event_tol});
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const CharState cs = char_state_at(d, alpha, probes[p], tol);
    const std::vector<double> G = gamma_bouss_at(d, alpha, cs, labels, tol.quad_rel).values;
    const std::vector<double> J = jacobian_at(d, cs, labels).values;
    const std::vector<double> R = rho_at(d, cs, labels).values;
    const std::vector<TracerSample>& tr = sr.records[p].tracers;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      out.gamma = std::max(out.gamma, std::abs(G[k] - tr[k].gamma));
      out.rho = std::max(out.rho, std::abs(R[k] - tr[k].rho));
      out.J = std::max(out.J, std::abs(J[k] - tr[k].J));
      if (path) {
        const double Jc = jacobian_part2(alpha, labels[k].x, probes[p], *path);
        out.J_closed = std::max(std::isnan(out.J_closed) ? 0.0 : out.J_closed,
                                std::max(std::abs(Jc - J[k]), std::abs(Jc - tr[k].J)));
      }
    }
  }
  return out;
}

inline OracleReport compare_oracles(const ScenarioConfig& c, double horizon_fraction) {
  if (!(horizon_fraction > 0.0 && horizon_fraction < 1.0)) {
    throw InvalidParams("horizon_fraction must lie in (0, 1)");
  }
  if (c.system == System::Spectral) {
    throw ConfigError("compare needs a characteristic system (euler, boussinesq, part2)");
  }
  const InitialData d = make_initial_data(c.gamma0, c.rho0, c.grid_n,
                                          {c.tolerances.quad_rel, c.tolerances.event_tol, false});
  const bool euler_data = d.rho0_is_zero();
  const bool symbolic = std::any_of(c.alpha_list.begin(), c.alpha_list.end(),
                                    [](const AlphaSpec& a) { return !a.value; });
  std::optional<double> TE;
  if (euler_data || symbolic) {
    try {
      const double t = blowup_time_undamped(d, c.tolerances.quad_rel);
      if (std::isfinite(t)) TE = t;
    } catch (const Error&) {
    }
    if (symbolic && !TE) throw ConfigError("symbolic alpha needs finite T^E");
  }
  const detail::Watch w = detail::make_watch(d, c.seed);
  OracleReport rep;
  rep.name = c.name;
  for (const AlphaSpec& a : c.alpha_list) {
    AlphaRecord r;
    r.label = a.label;
    r.tol = c.tolerances;
    r.alpha = a.value ? *a.value : a.critical_multiple / *TE;
    try {
      if (euler_data && TE) {
        if (r.alpha * *TE < 1.0) {
          r.T_est = r.alpha == 0.0 ? *TE : -std::log1p(-r.alpha * *TE) / r.alpha;
        }
      } else {
        BoussOptions o = default_watch(d, c.seed, c.tolerances);
        o.t_end = c.t_end;
        const BoussRun run = run_bouss(d, r.alpha, o);
        if (run.status.kind == Terminal::BlowupBracketed) r.T_est = run.estimate.T_est;
      }
      if (!r.T_est) throw DomainError("no blowup time to take a fraction of");
      r.oracle = compare_at(d, r.alpha, horizon_fraction * *r.T_est, c.grid_n, w.all(),
                            c.tolerances, c.system == System::Part2);
    } catch (const Error& e) {
      r.error = e.what();
    }
    rep.records.push_back(std::move(r));
  }
  return rep;
}

inline json to_json(const OracleReport& rep) {
  json j;
  j["name"] = rep.name;
  j["records"] = json::array();
  for (const AlphaRecord& r : rep.records) {
    json e;
    e["alpha_label"] = r.label;
    e["alpha"] = detail::num(r.alpha);
    e["T_est"] = detail::num(r.T_est);
    if (r.oracle) {
      e["n"] = r.oracle->n;
      e["horizon"] = detail::num(r.oracle->horizon);
      e["gamma"] = detail::num(r.oracle->gamma);
      e["rho"] = detail::num(r.oracle->rho);
      e["J"] = detail::num(r.oracle->J);
      e["J_closed"] = detail::num(r.oracle->J_closed);
      e["spectral_mean"] = detail::num(r.oracle->spectral_mean);
      e["spectral_omega"] = detail::num(r.oracle->spectral_omega);
    }
    e["error"] = r.error.empty() ? json(nullptr) : json(r.error);
    e["tolerances"] = to_json(r.tol);
    j["records"].push_back(e);
  }
  return j;
}

}  // namespace dampedlab
