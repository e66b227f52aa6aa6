#pragma once

// Characteristic solver for the damped Boussinesq system. The reduced state
// is (tau, sigma, A) with
//   tau' = e^{-alpha t} / phi1^2,  sigma' = -tau' A,  A' = e^{alpha t} phi1,
// and phi1 = Int 1/(1 + gamma0 tau - rho0 sigma) recomputed at every call.
// Everything label-indexed (J, gamma, rho) follows algebraically.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dampedlab/errors.hpp"
#include "dampedlab/fit.hpp"
#include "dampedlab/fields.hpp"
#include "dampedlab/moments.hpp"
#include "dampedlab/ode.hpp"

namespace dampedlab {

struct CharState {
  double t = 0.0;
  double tau = 0.0;
  double sigma = 0.0;
  double A = 0.0;
  double phi1 = 1.0;
  // Denominator at the reference minimum, 1 + g_ref tau - r_ref sigma. The
  // solver integrates it directly because forming it from tau and sigma
  // cancels to nothing near the singular time. NaN: derive from tau, sigma.
  double d0 = NAN;
};

inline double ref_d0(const InitialData& d, const CharState& s) {
  return std::isnan(s.d0) ? d.ref_denominator(s.tau, s.sigma) : s.d0;
}

namespace detail {

struct RefRates {
  double tau, sigma, A, d0;
};

// Rates for the state (d0, sigma, A); tau is recovered from d0 and sigma.
inline RefRates ref_rhs(const InitialData& d, double alpha, double t, double d0, double sigma,
                        double A, double quad_rel, LevelHint* hint) {
  const double tau = d.tau_from_ref(d0, sigma);
  const MomentOptions opts = hint ? hint->options(true) : MomentOptions{1, 6, -1, -1, 0, true};
  const Moments m = char_moments(d, d0, tau, sigma, quad_rel, opts);
  if (hint) hint->update(m);
  const double decay = std::exp(-alpha * t);
  const double taup = decay / (m.phi1 * m.phi1);
  return {taup, -taup * A, m.phi1 / decay, taup * (d.g_ref() + d.r_ref() * A)};
}

}  // namespace detail

// Right-hand side of the (tau, sigma, A) system.
inline std::array<double, 3> char_rhs(const InitialData& d, double alpha, double t,
                                      const std::array<double, 3>& s, double quad_rel,
                                      LevelHint* hint = nullptr) {
  const detail::RefRates r =
      detail::ref_rhs(d, alpha, t, d.ref_denominator(s[0], s[1]), s[1], s[2], quad_rel, hint);
  return {r.tau, r.sigma, r.A};
}

inline LabelField jacobian_at(const InitialData& d, const CharState& s,
                              const std::vector<Point2>& labels) {
  LabelField f{labels, std::vector<double>(labels.size())};
  const double d0 = ref_d0(d, s);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double D = d.denominator(labels[k], d0, s.tau, s.sigma);
    if (!(D > 0.0)) throw PastBlowup("denominator " + std::to_string(D) + " at a watched label");
    f.values[k] = 1.0 / (D * s.phi1);
  }
  return f;
}

// gamma = tau' ((gamma0 + A rho0)/D - (Kbar2 + A Lbar2)/phi1) = -d/dt ln J
inline LabelField gamma_bouss_at(const InitialData& d, double alpha, const CharState& s,
                                 const Moments& m, const std::vector<Point2>& labels) {
  LabelField f{labels, std::vector<double>(labels.size())};
  const double taup = std::exp(-alpha * s.t) / (m.phi1 * m.phi1);
  const double d0 = ref_d0(d, s);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double D = d.denominator(labels[k], d0, s.tau, s.sigma);
    if (!(D > 0.0)) throw PastBlowup("denominator " + std::to_string(D) + " at a watched label");
    f.values[k] = taup * ((d.gamma0(labels[k]) + s.A * d.rho0(labels[k])) / D -
                          (m.Kbar2 + s.A * m.Lbar2) / m.phi1);
  }
  return f;
}

inline LabelField gamma_bouss_at(const InitialData& d, double alpha, const CharState& s,
                                 const std::vector<Point2>& labels, double quad_rel) {
  Moments m;
  try {
    m = moment_integrals_ref(d, ref_d0(d, s), s.tau, s.sigma, quad_rel);
  } catch (const DenominatorSignChange& e) {
    throw PastBlowup(e.what());
  }
  return gamma_bouss_at(d, alpha, s, m, labels);
}

inline LabelField rho_at(const InitialData& d, const CharState& s,
                         const std::vector<Point2>& labels) {
  LabelField f = jacobian_at(d, s, labels);
  for (std::size_t k = 0; k < labels.size(); ++k) f.values[k] *= d.rho0(labels[k]);
  return f;
}

enum class BlowupKind { JToInfinity, JToZero, None };

inline const char* to_string(BlowupKind k) {
  switch (k) {
    case BlowupKind::JToInfinity: return "J_to_infinity";
    case BlowupKind::JToZero: return "J_to_zero";
    default: return "none";
  }
}

struct RateFit {
  double exponent = NAN;  // slope of the log-log fit
  double constant = NAN;  // prefactor
  double r2 = NAN;
};

struct BlowupEstimate {
  BlowupKind kind = BlowupKind::None;
  double T_est = NAN;
  double t_lo = NAN, t_hi = NAN;
  int label_index = -1;  // watch label that triggered the classification
  std::optional<RateFit> rate_fit;
};

struct BoussStep {
  CharState s;
  double Kbar2 = 0, Lbar2 = 0;
  double quad_err = 0;      // level-to-level change of the moments
  double norm_err = 0;      // |Int J - 1| on the defining rule
  int level_x = 0, level_y = 0;
  std::vector<double> J_watch, gamma_watch;
  double gamma_min = 0, gamma_max = 0;
  double bkm_partial = 0;
  // Only filled when BoussOptions::euler_bounds is set:
  double jacest_margin = NAN;  // min over zero-rho0 minima of J / bound - 1
  double time_margin = NAN;    // t_alpha^E(tau) - t
};

struct BoussOptions {
  Tolerances tol;
  double t_end = 50.0;
  std::vector<Point2> watch;  // watch labels; generic ones are flagged below
  std::vector<bool> generic;  // same length as watch
  int probe_n = 16;           // uniform label grid for gamma extrema
  bool euler_bounds = false;  // track the Euler comparison quantities
};

struct BoussRun {
  double alpha = 0.0;
  std::vector<BoussStep> steps;
  TerminalStatus status;
  BlowupEstimate estimate;
  double worst_norm_err = 0.0;
  double max_sigma = -INFINITY;
  double min_phi1 = INFINITY;
};

inline BoussOptions default_watch(const InitialData& d, std::uint64_t seed, Tolerances tol) {
  BoussOptions o;
  o.tol = tol;
  for (const Point2& p : watch_minima(d)) {
    o.watch.push_back(p);
    o.generic.push_back(false);
  }
  for (const Point2& p : generic_labels(seed)) {
    o.watch.push_back(p);
    o.generic.push_back(true);
  }
  return o;
}

namespace detail {

inline std::optional<RateFit> loglog_fit(const std::vector<double>& t, const std::vector<double>& v,
                                         double T) {
  if (t.empty()) return std::nullopt;
  const double d_min = T - t.back();
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double d = T - t[k];
    if (d > 0 && d <= 10.0 * d_min && v[k] > 0) {
      lx.push_back(std::log(d));
      ly.push_back(std::log(v[k]));
    }
  }
  if (lx.size() < 20) return std::nullopt;
  const LineFit f = fit_line(lx, ly);
  return RateFit{f.slope, std::exp(f.intercept), f.r2};
}

}  // namespace detail

// Integrates the characteristic system until the step size collapses (or
// t_end) and records diagnostics at every accepted step.
inline BoussRun run_bouss(const InitialData& d, double alpha, const BoussOptions& o) {
  BoussRun run;
  run.alpha = alpha;
  const bool track = o.euler_bounds;
  auto hint = std::make_shared<LevelHint>();
  auto hint_e = std::make_shared<LevelHint>();

  OdeProblem p;
  p.dim = track ? 4 : 3;
  p.t0 = 0.0;
  p.y0.assign(p.dim, 0.0);
  p.y0[0] = 1.0;  // state (d0, sigma, A[, t^E])
  const double qtol = o.tol.quad_rel;
  p.rhs = [&d, alpha, qtol, track, hint, hint_e](double t, const State& y, State& dy) {
    const detail::RefRates r = detail::ref_rhs(d, alpha, t, y[0], y[1], y[2], qtol, hint.get());
    dy[0] = r.d0;
    dy[1] = r.sigma;
    dy[2] = r.A;
    if (track) {
      // undamped Euler time as a function of tau: dt^E/dt = phi1_E(tau)^2 tau'
      const double tau = d.tau_from_ref(y[0], y[1]);
      const Moments me = detail::char_moments(d, d.ref_denominator(tau, 0.0), tau, 0.0, qtol,
                                              hint_e->options(true));
      hint_e->update(me);
      dy[3] = me.phi1 * me.phi1 * r.tau;
    }
  };

  const std::vector<Point2> probes = uniform_labels(o.probe_n);
  std::vector<std::size_t> zero_rho_minima;
  for (std::size_t k = 0; k < o.watch.size(); ++k)
    if (!o.generic[k] && std::abs(d.rho0(o.watch[k])) < 1e-15) zero_rho_minima.push_back(k);

  OdeTolerances ot{o.tol.ode_rel, o.tol.ode_abs, o.tol.event_tol};
  const OdeSolution sol = integrate(p, o.t_end, ot, [&](double t, const State& y) {
    BoussStep st;
    const double tau = d.tau_from_ref(y[0], y[1]);
    st.s = {t, tau, y[1], y[2], 1.0, y[0]};
    Moments m;
    try {
      m = moment_integrals_ref(d, y[0], tau, y[1], qtol, hint->options(false));
    } catch (const DenominatorSignChange&) {
      return;  // finer level than the step's own rhs sees the surface; skip
    }
    st.s.phi1 = m.phi1;
    st.Kbar2 = m.Kbar2;
    st.Lbar2 = m.Lbar2;
    st.quad_err = m.err;
    st.level_x = m.level_x;
    st.level_y = m.level_y;
    st.norm_err = std::abs(jacobian_mass(d, y[0], tau, y[1], m.phi1, m.level_x, m.level_y) - 1.0);
    st.J_watch = jacobian_at(d, st.s, o.watch).values;
    st.gamma_watch = gamma_bouss_at(d, alpha, st.s, m, o.watch).values;
    const LabelField gp = gamma_bouss_at(d, alpha, st.s, m, probes);
    st.gamma_min = std::min(*std::min_element(gp.values.begin(), gp.values.end()),
                            *std::min_element(st.gamma_watch.begin(), st.gamma_watch.end()));
    st.gamma_max = std::max(*std::max_element(gp.values.begin(), gp.values.end()),
                            *std::max_element(st.gamma_watch.begin(), st.gamma_watch.end()));
    const double sup = std::max(std::abs(st.gamma_min), std::abs(st.gamma_max));
    if (!run.steps.empty()) {
      const BoussStep& prev = run.steps.back();
      const double sup_prev = std::max(std::abs(prev.gamma_min), std::abs(prev.gamma_max));
      st.bkm_partial = prev.bkm_partial + 0.5 * (t - prev.s.t) * (sup + sup_prev);
    }
    if (track) {
      const double phiE = moment_integrals(d, tau, 0.0, qtol, hint_e->options(true)).phi1;
      st.jacest_margin = INFINITY;
      for (std::size_t k : zero_rho_minima) {
        const double bound = 1.0 / ((1.0 + d.gamma0(o.watch[k]) * tau) * phiE);
        st.jacest_margin = std::min(st.jacest_margin, st.J_watch[k] / bound - 1.0);
      }
      const double tE = y[3];
      const double tEa = alpha > 0 ? -std::log(std::abs(1.0 - alpha * tE)) / alpha : tE;
      st.time_margin = tEa - t;
    }
    run.worst_norm_err = std::max(run.worst_norm_err, st.norm_err);
    run.max_sigma = std::max(run.max_sigma, y[1]);
    run.min_phi1 = std::min(run.min_phi1, m.phi1);
    run.steps.push_back(std::move(st));
  });
  run.status = sol.status();

  BlowupEstimate& est = run.estimate;
  if (run.status.kind != Terminal::BlowupBracketed) return run;
  est.t_lo = run.status.t_lo;
  est.t_hi = run.status.t_hi;
  est.T_est = 0.5 * (est.t_lo + est.t_hi);

  const BoussStep& last = run.steps.back();
  std::size_t n_generic = 0, n_small = 0;
  int first_small = -1;
  for (std::size_t k = 0; k < o.watch.size(); ++k) {
    if (!o.generic[k]) continue;
    ++n_generic;
    if (last.J_watch[k] < o.tol.event_tol) {
      ++n_small;
      if (first_small < 0) first_small = int(k);
    }
  }
  if (n_generic > 0 && 2 * n_small >= n_generic) {
    est.kind = BlowupKind::JToZero;
    est.label_index = first_small;
  } else {
    double best = 0.0;
    for (std::size_t k = 0; k < o.watch.size(); ++k) {
      const double J = last.J_watch[k];
      const bool growing =
          run.steps.size() > 1 && J > run.steps[run.steps.size() - 2].J_watch[k];
      if (J > 1.0 / o.tol.event_tol && growing && J > best) {
        best = J;
        est.kind = BlowupKind::JToInfinity;
        est.label_index = int(k);
      }
    }
  }
  if (est.label_index >= 0) {
    std::vector<double> ts, js;
    for (const BoussStep& st : run.steps) {
      ts.push_back(st.s.t);
      js.push_back(st.J_watch[std::size_t(est.label_index)]);
    }
    est.rate_fit = detail::loglog_fit(ts, js, est.T_est);
  }
  return run;
}

// Characteristic state at time t (before blowup), phi1 filled in.
inline CharState char_state_at(const InitialData& d, double alpha, double t, Tolerances tol = {}) {
  if (!(t >= 0.0)) throw DomainError("char_state_at needs t >= 0");
  CharState s;
  if (t > 0.0) {
    auto hint = std::make_shared<LevelHint>();
    OdeProblem p;
    p.dim = 3;
    p.t0 = 0.0;
    p.y0 = {1.0, 0.0, 0.0};
    const double qtol = tol.quad_rel;
    p.rhs = [&d, alpha, qtol, hint](double tt, const State& y, State& dy) {
      const detail::RefRates r = detail::ref_rhs(d, alpha, tt, y[0], y[1], y[2], qtol, hint.get());
      dy[0] = r.d0;
      dy[1] = r.sigma;
      dy[2] = r.A;
    };
    const OdeSolution sol = integrate(p, t, {tol.ode_rel, tol.ode_abs, tol.event_tol});
    if (sol.status().kind == Terminal::BlowupBracketed) {
      throw PastBlowup("t = " + std::to_string(t) + " is past the blowup bracket");
    }
    const State y = sol(t);
    s = {t, d.tau_from_ref(y[0], y[1]), y[1], y[2], 1.0, y[0]};
  } else {
    s.d0 = 1.0;
  }
  s.phi1 = moment_integrals_ref(d, s.d0, s.tau, s.sigma, tol.quad_rel).phi1;
  return s;
}

inline BlowupEstimate detect_blowup(const InitialData& d, double alpha,
                                    const std::vector<Point2>& watch_labels, Tolerances tol,
                                    std::uint64_t seed = 1) {
  BoussOptions o;
  o.tol = tol;
  o.watch = watch_labels;
  o.generic.assign(watch_labels.size(), false);
  for (const Point2& p : generic_labels(seed)) {
    o.watch.push_back(p);
    o.generic.push_back(true);
  }
  return run_bouss(d, alpha, o).estimate;
}

}  // namespace dampedlab
