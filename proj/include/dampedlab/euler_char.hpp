#pragma once

// Damped and undamped Euler along characteristics (rho0 = 0, sigma = 0).
//
// Everything is parametrized by s = tau* - tau. With the reference minimum
// value m0 = -1/tau*, the smallest denominator is d0 = 1 + m0 tau = s / tau*
// exactly, which is what the moment sweep needs near the singular time.
//
//   t^E(tau)        = Int_0^tau phi1(mu)^2 dmu
//   t_alpha^E(tau)  = -(1/alpha) ln|1 - alpha t^E(tau)|
//   tau_alpha'      = e^{-alpha t} / phi1^2
//   gamma           = tau_alpha' (gamma0/D - Kbar2/phi1)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>

#include "dampedlab/errors.hpp"
#include "dampedlab/fields.hpp"
#include "dampedlab/fit.hpp"
#include "dampedlab/moments.hpp"
#include "dampedlab/ode.hpp"

namespace dampedlab {

namespace detail {

inline void require_blowup_data(const InitialData& d) {
  if (!(d.m0() < 0.0)) throw NonNegativeMinimum("Euler time maps need a negative minimum");
}

// Moments at tau = tau* - s.
inline Moments euler_moments(const InitialData& d, double s, double quad_rel,
                             MomentOptions opts = {}) {
  const double ts = d.tau_star();
  Moments m = moment_integrals_ref(d, s / ts, ts - s, 0.0, quad_rel, opts);
  if (!m.converged) {
    throw NoConvergence("Euler moments did not converge at tau* - tau = " + std::to_string(s) +
                        " (err " + std::to_string(m.err) + ")");
  }
  return m;
}

// Int of phi1^2 over tau in [tau* - s_hi, tau* - s_lo], in the variable
// u = ln s, where the log singularity of phi1 at tau* is smooth.
struct TimeTable {
  double tau_star = 0.0;
  double quad_rel = 1e-12;
  int extra_levels = 0;
  std::vector<double> s;    // panel ends, s[0] = tau*, s[k] = tau* 2^-k
  std::vector<double> inc;  // integral over panel k: [s[k+1], s[k]]
  std::vector<double> cum;  // t^E at tau* - s[k]
  std::vector<double> tail; // T^E - t^E at tau* - s[k] (finite case)
  double TE = INFINITY;
  double TE_err = NAN;
  std::string diagnostic;
  mutable LevelHint hint;

  double panel(const InitialData& d, double s_lo, double s_hi) const {
    if (!(s_hi > s_lo)) return 0.0;
    const double u0 = std::log(s_lo), u1 = std::log(s_hi);
    return boost::math::quadrature::gauss<double, 20>::integrate(
        [&](double u) {
          const double sv = std::exp(u);
          MomentOptions o;
          o.start_x = hint.x;
          o.start_y = hint.y;
          o.phi_only = true;
          o.extra_levels = extra_levels;
          const Moments m = euler_moments(d, sv, quad_rel, o);
          hint.x = std::max(1, m.level_x - extra_levels);
          hint.y = std::max(1, m.level_y - extra_levels);
          return m.phi1 * m.phi1 * sv;
        },
        u0, u1);
  }
};

}  // namespace detail

struct TimeMaps {
  double tau_star = NAN;
  double TE = INFINITY;  // limit of t^E at tau*
  double TE_err = NAN;   // tail estimate past the last panel
  double alpha = 0.0;
  std::string diagnostic;
  std::function<double(double)> tE;        // undamped Euler time at tau
  std::function<double(double)> tE_tail;   // T^E - t^E(tau), summed directly
  std::function<double(double)> tEalpha;   // damped Euler time at tau
  // e^{-alpha t_alpha^E(tau)} = 1 - alpha t^E(tau), using the tail near tau*.
  std::function<double(double)> decay;
  std::shared_ptr<const detail::TimeTable> table;
};

struct TimeMapOptions {
  double quad_rel = 1e-12;
  int depth = 48;         // panels down to s = tau* 2^-depth
  int extra_levels = 0;   // grid doubling check
};

namespace detail {

inline std::shared_ptr<const TimeTable> build_time_table(const InitialData& d, TimeMapOptions o) {
  require_blowup_data(d);
  if (o.depth < 4) throw InvalidParams("time map depth must be at least 4");
  auto tab = std::make_shared<TimeTable>();
  const double ts = d.tau_star();
  tab->tau_star = ts;
  tab->quad_rel = o.quad_rel;
  tab->extra_levels = o.extra_levels;
  tab->s.push_back(ts);
  tab->cum.push_back(0.0);
  for (int k = 0; k < o.depth; ++k) {
    const double hi = tab->s.back(), lo = 0.5 * hi;
    const double v = tab->panel(d, lo, hi);
    tab->inc.push_back(v);
    tab->s.push_back(lo);
    tab->cum.push_back(tab->cum.back() + v);
  }
  // Tail past the last panel from the ratio of the last increments. For a
  // finite set of quadratic minima the ratio tends to 1/2; for curve minima
  // phi1^2 ~ 1/s and every octave contributes the same amount.
  const std::size_t n = tab->inc.size();
  const double r1 = tab->inc[n - 1] / tab->inc[n - 2];
  const double r2 = tab->inc[n - 2] / tab->inc[n - 3];
  if (r1 > 0.75 || r2 > 0.75) {
    tab->TE = INFINITY;
    tab->diagnostic = "octave increments of t^E do not decay (ratio " + std::to_string(r1) +
                      "); the minimum set is not a finite set of nondegenerate points";
  } else {
    const double rest = tab->inc[n - 1] * r1 / (1.0 - r1);
    tab->TE = tab->cum.back() + rest;
    tab->TE_err = std::abs(rest) * std::max(std::abs(r1 - r2) / (1.0 - r1), 1e-2) +
                  16.0 * std::numeric_limits<double>::epsilon() * tab->TE;
    tab->tail.assign(n + 1, 0.0);
    tab->tail[n] = rest;
    for (std::size_t k = n; k-- > 0;) tab->tail[k] = tab->tail[k + 1] + tab->inc[k];
  }
  return tab;
}

}  // namespace detail

// Rebinds the undamped table of an existing map to another alpha.
inline TimeMaps with_alpha(const InitialData& d, const std::shared_ptr<const detail::TimeTable>& tab,
                           double alpha) {
  if (!(alpha >= 0.0)) throw InvalidParams("alpha must be nonnegative");
  const double ts = tab->tau_star;
  TimeMaps m;
  m.table = tab;
  m.tau_star = ts;
  m.TE = tab->TE;
  m.TE_err = tab->TE_err;
  m.alpha = alpha;
  m.diagnostic = tab->diagnostic;
  const InitialData* dp = &d;
  // Panel k holds tau* - s in [tau* - s[k], tau* - s[k+1]].
  auto locate = [tab](double s) {
    std::size_t k = 0;
    while (k + 1 < tab->s.size() && tab->s[k + 1] >= s) ++k;
    return k;
  };
  auto check = [ts](double tau) {
    if (!(tau >= 0.0 && tau < ts)) {
      throw DomainError("tau = " + std::to_string(tau) + " outside [0, tau*)");
    }
  };
  m.tE = [tab, dp, locate, check, ts](double tau) {
    check(tau);
    if (tau == 0.0) return 0.0;
    const double s = ts - tau;
    const std::size_t k = locate(s);
    if (k + 1 >= tab->s.size()) throw DomainError("tau beyond the tabulated depth");
    return tab->cum[k] + tab->panel(*dp, s, tab->s[k]);
  };
  m.tE_tail = [tab, dp, locate, check, ts](double tau) -> double {
    check(tau);
    if (!std::isfinite(tab->TE)) return INFINITY;
    const double s = ts - tau;
    const std::size_t k = locate(s);
    if (k + 1 >= tab->s.size()) throw DomainError("tau beyond the tabulated depth");
    return tab->tail[k + 1] + tab->panel(*dp, tab->s[k + 1], s);
  };
  const auto tE = m.tE, tail = m.tE_tail;
  const double TE = m.TE;
  m.decay = [alpha, tE, tail, TE](double tau) {
    if (alpha == 0.0) return 1.0;
    if (std::isfinite(TE) && alpha * TE >= 0.5) return (1.0 - alpha * TE) + alpha * tail(tau);
    return 1.0 - alpha * tE(tau);
  };
  const auto decay = m.decay;
  m.tEalpha = [alpha, tE, decay](double tau) -> double {
    if (alpha == 0.0) return tE(tau);
    const double q = decay(tau);
    if (!(q > 0.0)) return INFINITY;
    return -std::log(q) / alpha;
  };
  return m;
}

inline TimeMaps make_time_maps(const InitialData& d, double alpha, TimeMapOptions o = {}) {
  return with_alpha(d, detail::build_time_table(d, o), alpha);
}

inline double undamped_time_map(const InitialData& d, double tau, double quad_rel = 1e-12) {
  return make_time_maps(d, 0.0, {quad_rel, 48, 0}).tE(tau);
}

inline double blowup_time_undamped(const InitialData& d, double quad_rel = 1e-12, int depth = 48) {
  return make_time_maps(d, 0.0, {quad_rel, depth, 0}).TE;
}

enum class Regime { Blowup, NontrivialSteady, TrivialSteady };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::Blowup: return "blowup";
    case Regime::NontrivialSteady: return "nontrivial_steady";
    default: return "trivial_steady";
  }
}

struct RegimeReport {
  Regime regime = Regime::Blowup;
  std::optional<double> T_blowup;
  std::optional<LabelField> steady_profile;
  double alpha_critical = NAN;  // 1/T^E
};

// gamma at tau along the damped Euler flow, in tau-space. decay is
// e^{-alpha t} at that tau (from TimeMaps::decay).
inline LabelField gamma_euler_tau(const InitialData& d, double s, double decay,
                                  const std::vector<Point2>& labels, double quad_rel,
                                  Moments* out = nullptr) {
  const double ts = d.tau_star();
  const Moments m = detail::euler_moments(d, s, quad_rel);
  if (out) *out = m;
  const double tau = ts - s, d0 = s / ts;
  const double taup = decay / (m.phi1 * m.phi1);
  LabelField f{labels, std::vector<double>(labels.size())};
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double D = d.denominator(labels[k], d0, tau, 0.0);
    f.values[k] = taup * (d.gamma0(labels[k]) / D - m.Kbar2 / m.phi1);
  }
  return f;
}

// tau where 1 - alpha t^E(tau) = q (alpha > 1/T^E, so such a tau exists).
inline double tau_at_decay(const TimeMaps& maps, double q) {
  const double a = maps.alpha;
  auto f = [&](double tau) { return (1.0 - a * maps.tE(tau)) - q; };
  double lo = 0.0, hi = maps.tau_star * (1.0 - 1e-12);
  if (f(hi) > 0.0) throw DomainError("decay level not reached before tau*");
  std::uintmax_t it = 200;
  const auto r = boost::math::tools::toms748_solve(
      f, lo, hi, 1.0 - q, f(hi), boost::math::tools::eps_tolerance<double>(48), it);
  return 0.5 * (r.first + r.second);
}

inline RegimeReport classify_regime(const InitialData& d, double alpha, const TimeMaps& maps,
                                    double event_tol, const std::vector<Point2>& labels,
                                    double quad_rel = 1e-12) {
  if (!std::isfinite(maps.TE)) {
    throw UndampedNoBlowup("T^E is infinite: " + maps.diagnostic);
  }
  if (!(alpha > 0.0)) throw InvalidParams("classify_regime needs alpha > 0");
  RegimeReport r;
  r.alpha_critical = 1.0 / maps.TE;
  const double rel = alpha * maps.TE - 1.0;
  if (std::abs(rel) <= event_tol) {
    r.regime = Regime::NontrivialSteady;
    // plateau value, measured deep in the tail with the critical decay law
    const double s = maps.tau_star * std::ldexp(1.0, -40);
    const double q = maps.tE_tail(maps.tau_star - s) / maps.TE;
    r.steady_profile = gamma_euler_tau(d, s, q, labels, quad_rel);
  } else if (rel < 0.0) {
    r.regime = Regime::Blowup;
    r.T_blowup = -std::log1p(-alpha * maps.TE) / alpha;
  } else {
    r.regime = Regime::TrivialSteady;
    r.steady_profile = LabelField{labels, std::vector<double>(labels.size(), 0.0)};
  }
  return r;
}

inline RegimeReport classify_regime(const InitialData& d, double alpha, Tolerances tol = {}) {
  const TimeMaps maps = make_time_maps(d, alpha, {tol.quad_rel, 48, 0});
  std::vector<Point2> labels = watch_minima(d);
  for (const Point2& p : uniform_labels(4)) labels.push_back(p);
  return classify_regime(d, alpha, maps, tol.event_tol, labels, tol.quad_rel);
}

// State (tau, d0) with d0 = 1 + m0 tau carried separately for precision.
inline OdeSolution solve_tau_alpha(const InitialData& d, double alpha, double t_end,
                                   Tolerances tol = {}) {
  detail::require_blowup_data(d);
  if (!(alpha >= 0.0)) throw InvalidParams("alpha must be nonnegative");
  auto hint = std::make_shared<LevelHint>();
  OdeProblem p;
  p.dim = 2;
  p.t0 = 0.0;
  p.y0 = {0.0, 1.0};
  const double m0 = d.m0(), qtol = tol.quad_rel;
  p.rhs = [&d, alpha, m0, qtol, hint](double t, const State& y, State& dy) {
    const double tau = (y[1] - 1.0) / m0;
    const Moments m =
        detail::char_moments(d, y[1], tau, 0.0, qtol, hint->options(true));
    hint->update(m);
    dy[0] = std::exp(-alpha * t) / (m.phi1 * m.phi1);
    dy[1] = m0 * dy[0];
  };
  OdeTolerances ot{tol.ode_rel, tol.ode_abs, tol.event_tol};
  return integrate(p, t_end, ot);
}

inline LabelField gamma_euler_at(const InitialData& d, double alpha,
                                 const std::vector<Point2>& labels, double t, Tolerances tol = {}) {
  if (!(t >= 0.0)) throw DomainError("gamma_euler_at needs t >= 0");
  LabelField f{labels, std::vector<double>(labels.size())};
  if (t == 0.0) {
    for (std::size_t k = 0; k < labels.size(); ++k) f.values[k] = d.gamma0(labels[k]);
    return f;
  }
  const OdeSolution sol = solve_tau_alpha(d, alpha, t, tol);
  if (sol.status().kind == Terminal::BlowupBracketed) {
    throw PastBlowup("t = " + std::to_string(t) + " is past the blowup bracket [" +
                     std::to_string(sol.status().t_lo) + ", " + std::to_string(sol.status().t_hi) +
                     "]");
  }
  const State y = sol(t);
  const double tau = y[0], d0 = y[1];
  const Moments m = moment_integrals_ref(d, d0, tau, 0.0, tol.quad_rel);
  const double taup = std::exp(-alpha * t) / (m.phi1 * m.phi1);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double D = d.denominator(labels[k], d0, tau, 0.0);
    if (!(D > 0.0)) throw PastBlowup("denominator vanished at a label");
    f.values[k] = taup * (d.gamma0(labels[k]) / D - m.Kbar2 / m.phi1);
  }
  return f;
}

// Trapezoid integral of a sampled sup norm.
inline double bkm_integral(const std::vector<double>& t, const std::vector<double>& sup) {
  if (t.size() != sup.size()) throw InvalidParams("bkm_integral: size mismatch");
  if (t.size() < 2) return 0.0;
  return cumulative_trapezoid(t, sup).back();
}

// Samples along the damped Euler flow in tau-space.
struct EulerSample {
  double s = 0, tau = 0;   // s = tau* - tau
  double tE = 0, t = 0;    // undamped and damped time
  double decay = 1;        // e^{-alpha t}
  double phi1 = 1, Kbar2 = 0, inv_d2 = 1;  // inv_d2 = Int D^-2
  double norm_err = 0;
  std::vector<double> gamma_watch, J_watch;
  double gamma_min = 0, gamma_max = 0, sup = 0;
  double bkm_partial = 0;
};

struct EulerSeries {
  double alpha = 0;
  std::vector<EulerSample> samples;
};

// Sample at the given s values (decreasing), watch labels plus a uniform
// probe grid for the extrema.
inline EulerSeries euler_tau_series(const InitialData& d, const TimeMaps& maps,
                                    const std::vector<double>& s_values,
                                    const std::vector<Point2>& watch, double quad_rel,
                                    int probe_n = 16) {
  EulerSeries out;
  out.alpha = maps.alpha;
  std::vector<Point2> labels = watch;
  for (const Point2& p : uniform_labels(probe_n)) labels.push_back(p);
  const double ts = maps.tau_star;
  for (double s : s_values) {
    EulerSample e;
    e.s = s;
    e.tau = ts - s;
    e.tE = maps.tE(e.tau);
    e.decay = maps.decay(e.tau);
    if (!(e.decay > 0.0)) break;
    e.t = maps.alpha == 0.0 ? e.tE : -std::log(e.decay) / maps.alpha;
    Moments m;
    const LabelField g = gamma_euler_tau(d, s, e.decay, labels, quad_rel, &m);
    e.phi1 = m.phi1;
    e.Kbar2 = m.Kbar2;
    e.inv_d2 = m.phi1 - e.tau * m.Kbar2;
    e.norm_err = std::abs(jacobian_mass(d, s / ts, e.tau, 0.0, m.phi1, m.level_x, m.level_y) - 1.0);
    e.gamma_watch.assign(g.values.begin(), g.values.begin() + std::ptrdiff_t(watch.size()));
    for (const Point2& a : watch) e.J_watch.push_back(1.0 / (d.denominator(a, s / ts, e.tau, 0.0) * m.phi1));
    e.gamma_min = *std::min_element(g.values.begin(), g.values.end());
    e.gamma_max = *std::max_element(g.values.begin(), g.values.end());
    e.sup = std::max(std::abs(e.gamma_min), std::abs(e.gamma_max));
    if (!out.samples.empty()) {
      const EulerSample& p = out.samples.back();
      e.bkm_partial = p.bkm_partial + 0.5 * (e.t - p.t) * (e.sup + p.sup);
    }
    out.samples.push_back(std::move(e));
  }
  return out;
}

// s = tau* 2^{-k/per_octave}, k = 0..octaves*per_octave, starting at tau = 0.
inline std::vector<double> geometric_s(double tau_star, int octaves, int per_octave) {
  std::vector<double> s;
  for (int k = 0; k <= octaves * per_octave; ++k)
    s.push_back(tau_star * std::exp2(-double(k) / per_octave));
  s.front() = tau_star;
  return s;
}

}  // namespace dampedlab
