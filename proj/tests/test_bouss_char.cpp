#include <cmath>

#include <gtest/gtest.h>

#include "dampedlab/bouss_char.hpp"
#include "dampedlab/closedform.hpp"
#include "dampedlab/euler_char.hpp"

using namespace dampedlab;

namespace {

const InitialData& part2() {
  static const InitialData d = make_initial_data("cos(4*pi*x)", "-sin(2*pi*x)^2", 64);
  return d;
}

}  // namespace

TEST(CharRhs, InitialState) {
  const std::array<double, 3> r = char_rhs(part2(), 0.3, 0.0, {0, 0, 0}, 1e-12);
  EXPECT_NEAR(r[0], 1.0, 1e-14);
  EXPECT_NEAR(r[1], 0.0, 1e-14);
  EXPECT_NEAR(r[2], 1.0, 1e-14);
}

TEST(CharRhs, NoRhoReducesToEuler) {
  const InitialData d = make_initial_data("cos(2*pi*x)*cos(2*pi*y)", "0", 64);
  const double a = 0.2, t = 0.8;
  const CharState s = char_state_at(d, a, t);
  const double tau = solve_tau_alpha(d, a, t)(t)[0];
  EXPECT_NEAR(s.tau, tau, 1e-9);
  EXPECT_LT(s.sigma, 0.0);  // sigma moves, but has no coefficient
  const std::vector<Point2> labels{{0.0, 0.5}, {0.2, 0.9}};
  const LabelField gb = gamma_bouss_at(d, a, s, labels, 1e-12);
  const LabelField ge = gamma_euler_at(d, a, labels, t);
  for (std::size_t k = 0; k < labels.size(); ++k) EXPECT_NEAR(gb.values[k], ge.values[k], 1e-8);
}

TEST(Jacobian, Part2ClosedForm) {
  const CharState s0 = char_state_at(part2(), 0.0, 0.0);
  const std::vector<Point2> labels{{0.0, 0.3}, {0.25, 0.7}, {0.6, 0.1}};
  for (double J : jacobian_at(part2(), s0, labels).values) EXPECT_NEAR(J, 1.0, 1e-14);

  const CharState s = char_state_at(part2(), 0.0, 1.0);
  const LabelField J = jacobian_at(part2(), s, {{0.25, 0.5}, {0.0, 0.5}});
  EXPECT_NEAR(J.values[0], 4.0, 1e-7);
  EXPECT_NEAR(J.values[1], 0.25, 1e-8);

  // label average over a uniform grid
  const std::vector<Point2> grid = uniform_labels(128);  // 64 leaves ~1e-7 at t = 1
  double mean = 0;
  for (double v : jacobian_at(part2(), s, grid).values) mean += v / double(grid.size());
  EXPECT_NEAR(mean, 1.0, 1e-10);
}

TEST(GammaBouss, InitialValueAndLogDerivative) {
  const double a = 0.25;
  const std::vector<Point2> labels{{0.05, 0.5}, {0.25, 0.5}, {0.4, 0.2}, {0.9, 0.6}};
  const CharState s0 = char_state_at(part2(), a, 0.0);
  const LabelField g0 = gamma_bouss_at(part2(), a, s0, labels, 1e-12);
  for (std::size_t k = 0; k < labels.size(); ++k)
    EXPECT_NEAR(g0.values[k], part2().gamma0(labels[k]), 1e-13);

  // d/dt ln J = -gamma
  const double t = 1.2, h = 1e-3;
  const LabelField Jp = jacobian_at(part2(), char_state_at(part2(), a, t + h), labels);
  const LabelField Jm = jacobian_at(part2(), char_state_at(part2(), a, t - h), labels);
  const LabelField g = gamma_bouss_at(part2(), a, char_state_at(part2(), a, t), labels, 1e-12);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double dlnJ = (std::log(Jp.values[k]) - std::log(Jm.values[k])) / (2 * h);
    EXPECT_NEAR(-dlnJ, g.values[k], 1e-5 * (1 + std::abs(g.values[k])));
  }
}

TEST(Rho, FollowsTheJacobian) {
  const CharState s = char_state_at(part2(), 0.0, 1.0);
  const std::vector<Point2> labels{{0.0, 0.1}, {0.1, 0.1}, {0.3, 0.8}};
  const LabelField J = jacobian_at(part2(), s, labels);
  const LabelField r = rho_at(part2(), s, labels);
  for (std::size_t k = 0; k < labels.size(); ++k)
    EXPECT_DOUBLE_EQ(r.values[k], part2().rho0(labels[k]) * J.values[k]);
  EXPECT_EQ(r.values[0], 0.0);
  const LabelField r0 = rho_at(part2(), char_state_at(part2(), 0.0, 0.0), labels);
  for (std::size_t k = 0; k < labels.size(); ++k)
    EXPECT_NEAR(r0.values[k], part2().rho0(labels[k]), 1e-15);
}

TEST(Detect, Part2CollapsesAtTwo) {
  Tolerances tol;
  tol.event_tol = 1e-5;
  const BlowupEstimate e = detect_blowup(part2(), 0.0, watch_minima(part2()), tol);
  EXPECT_EQ(e.kind, BlowupKind::JToZero);
  EXPECT_NEAR(e.T_est, 2.0, 1e-3);
  EXPECT_LE(e.t_lo, e.T_est);
  EXPECT_LE(e.T_est, e.t_hi);
  EXPECT_LE(e.t_hi - e.t_lo, tol.event_tol);

  const BlowupEstimate d = detect_blowup(part2(), 0.25, watch_minima(part2()), tol);
  EXPECT_EQ(d.kind, BlowupKind::JToZero);
  EXPECT_LE(d.T_est, 4 * std::log(2.0));
}

TEST(Run, StateReductionMatchesDoubleIntegral) {
  // sigma = B - tau A with B = Int e^{alpha s} tau phi1 ds, A = Int e^{alpha s} phi1 ds
  const double a = 0.25;
  BoussOptions o = default_watch(part2(), 1, {});
  o.t_end = 1.5;
  const BoussRun run = run_bouss(part2(), a, o);
  std::vector<double> t, vb, va;
  for (const BoussStep& st : run.steps) {
    t.push_back(st.s.t);
    vb.push_back(std::exp(a * st.s.t) * st.s.tau * st.s.phi1);
    va.push_back(std::exp(a * st.s.t) * st.s.phi1);
  }
  const std::vector<double> B = cumulative_trapezoid(t, vb), A = cumulative_trapezoid(t, va);
  for (std::size_t k = 0; k < t.size(); k += 10) {
    const BoussStep& st = run.steps[k];
    EXPECT_NEAR(st.s.A, A[k], 1e-4 * (1 + A[k]));
    EXPECT_NEAR(st.s.sigma, B[k] - st.s.tau * A[k], 1e-4 * (1 + std::abs(st.s.sigma)));
  }
  EXPECT_LE(run.worst_norm_err, 10 * o.tol.quad_rel);
}

TEST(Run, StretchingAtTheZeroTemperatureMinimum) {
  // rho0 = sin^2(pi x) >= 0 vanishes at the minimum (0, 1/2) only
  const InitialData d = make_initial_data("cos(2*pi*x)*cos(2*pi*y)", "sin(pi*x)^2", 64);
  const double TE = blowup_time_undamped(d);
  const double a = 0.5 / TE, TaE = -std::log1p(-a * TE) / a;
  BoussOptions o = default_watch(d, 1, {});
  o.euler_bounds = true;
  const BoussRun run = run_bouss(d, a, o);
  ASSERT_EQ(run.estimate.kind, BlowupKind::JToInfinity);
  const Point2 p = o.watch[std::size_t(run.estimate.label_index)];
  EXPECT_LT(torus_distance(p, {0.0, 0.5}), 1e-6);
  EXPECT_GT(run.estimate.T_est, 0.0);
  EXPECT_LT(run.estimate.T_est, TaE);

  double prev_sigma = 0.0;
  for (const BoussStep& st : run.steps) {
    EXPECT_LE(st.s.sigma, prev_sigma + 1e-15);
    prev_sigma = st.s.sigma;
    EXPECT_GT(st.s.phi1, 0.0);
    EXPECT_GE(st.jacest_margin, -1e-12);
    EXPECT_GE(st.time_margin, -1e-9);
    EXPECT_LE(st.norm_err, 10 * o.tol.quad_rel);
    const LabelField r = rho_at(d, st.s, o.watch);
    for (double v : r.values) EXPECT_GE(v, 0.0);
  }
  // rho stays zero where rho0 vanishes even as J grows
  EXPECT_EQ(rho_at(d, run.steps.back().s, {p}).values[0], 0.0);
}
