#include <cmath>

#include <gtest/gtest.h>

#include "dampedlab/ode.hpp"

using namespace dampedlab;

namespace {

OdeProblem scalar(std::function<double(double, double)> f, double y0) {
  OdeProblem p;
  p.dim = 1;
  p.y0 = {y0};
  p.rhs = [f](double t, const State& y, State& dy) { dy[0] = f(t, y[0]); };
  return p;
}

}  // namespace

TEST(Ode, LinearDecay) {
  const OdeSolution s = integrate(scalar([](double, double y) { return -y; }, 1.0), 1.0, {1e-10, 1e-12});
  EXPECT_EQ(s.status().kind, Terminal::ReachedEnd);
  EXPECT_NEAR(s.back()[0], std::exp(-1.0), 1e-9);
  EXPECT_NEAR(s(0.5)[0], std::exp(-0.5), 1e-8);  // dense output
}

TEST(Ode, TighterToleranceHelps) {
  auto err = [](double rel) {
    const OdeSolution s = integrate(scalar([](double, double y) { return -y; }, 1.0), 5.0, {rel, rel * 1e-3});
    return std::abs(s.back()[0] - std::exp(-5.0)) / std::exp(-5.0);
  };
  EXPECT_GE(err(1e-6) / err(5e-7), 2.0 * 0.999);
}

TEST(Ode, QuadraticBlowupIsBracketed) {
  for (double tol : {1e-4, 1e-6}) {
    OdeTolerances t{1e-10, 1e-12, tol};
    const OdeSolution s = integrate(scalar([](double, double y) { return 0.5 * y * y; }, 1.0), 10.0, t);
    ASSERT_EQ(s.status().kind, Terminal::BlowupBracketed);
    EXPECT_LE(s.status().t_hi - s.status().t_lo, tol);
    EXPECT_NEAR(0.5 * (s.status().t_lo + s.status().t_hi), 2.0, tol);
    // probes against 2/(2 - t)
    for (double tp : {0.5, 1.0, 1.5}) EXPECT_NEAR(s(tp)[0] * (2 - tp) / 2, 1.0, 1e-8);
  }
}

TEST(Ode, RhsBlowupRejectsSteps) {
  // rhs refuses past t = 1: the integrator brackets that time
  OdeProblem p = scalar([](double, double) { return 1.0; }, 0.0);
  p.rhs = [](double t, const State&, State& dy) {
    if (t > 1.0) throw IntegrandBlowup("past the surface");
    dy[0] = 1.0;
  };
  const OdeSolution s = integrate(p, 3.0, {1e-10, 1e-12, 1e-8});
  ASSERT_EQ(s.status().kind, Terminal::BlowupBracketed);
  EXPECT_NEAR(s.status().t_lo, 1.0, 1e-8);
}

TEST(Ode, EventHitStopsTheRun) {
  OdeProblem p = scalar([](double, double y) { return y; }, 1.0);
  p.events.push_back([](double, const State& y) { return y[0] - 10.0; });
  const OdeSolution s = integrate(p, 3.0, {1e-10, 1e-12, 1e-9});
  ASSERT_EQ(s.status().kind, Terminal::EventHit);
  EXPECT_EQ(s.status().event_index, 0);
  EXPECT_NEAR(s.status().t_event, std::log(10.0), 1e-8);
  EXPECT_NEAR(locate_event(s, 0), std::log(10.0), 1e-8);
}

TEST(Ode, LocateEvent) {
  OdeProblem p = scalar([](double, double y) { return 0.5 * y * y; }, 1.0);
  const OdeSolution base = integrate(p, 1.9, {1e-11, 1e-13, 1e-9});
  for (double tp : {0.5, 1.0, 1.5}) {
    OdeProblem q = p;
    q.events = {[tp](double, const State& y) { return y[0] - 2.0 / (2.0 - tp); }};
    const OdeSolution s = integrate(q, 1.9, {1e-11, 1e-13, 1e-9});
    EXPECT_NEAR(locate_event(s, 0), tp, 1e-7);
  }
  OdeProblem r = p;
  r.events = {[](double t, const State&) { return t - 0.5; },
              [](double, const State& y) { return y[0] + 1.0; }};
  const OdeSolution s = integrate(r, 1.0, {1e-11, 1e-13, 1e-9});
  EXPECT_NEAR(locate_event(s, 0), 0.5, 1e-8);
  EXPECT_THROW(locate_event(s, 1), NoSignChange);
  EXPECT_THROW(locate_event(base, 0), InvalidParams);
}

TEST(Ode, BitReproducible) {
  auto run = [] {
    return integrate(scalar([](double t, double y) { return std::sin(t) * y; }, 1.0), 4.0, {1e-9, 1e-12});
  };
  const OdeSolution a = run(), b = run();
  ASSERT_EQ(a.nodes().size(), b.nodes().size());
  for (std::size_t k = 0; k < a.nodes().size(); ++k) {
    EXPECT_EQ(a.nodes()[k].t, b.nodes()[k].t);
    EXPECT_EQ(a.nodes()[k].y, b.nodes()[k].y);
  }
}
