#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dampedlab/bouss_char.hpp"
#include "dampedlab/closedform.hpp"

using namespace dampedlab;

TEST(Closedform, UndampedMu1) {
  EXPECT_EQ(mu1_exact_undamped(0.0), 1.0);
  EXPECT_EQ(mu1_exact_undamped(1.0), 4.0);
  const double t = 2.0 - 1e-6;
  EXPECT_NEAR((2 - t) * (2 - t) * mu1_exact_undamped(t), 4.0, 1e-9);
  EXPECT_THROW(mu1_exact_undamped(2.0), DomainError);
}

TEST(Closedform, SolveNUndamped) {
  const Mu1Path p = solve_N(0.0, {1e-11, 1e-13, 1e-7});
  EXPECT_NEAR(p.T_div, 2.0, 1e-6);
  for (const Mu1Sample& s : p.samples) {
    if (s.t > 1.9) break;
    EXPECT_NEAR(s.mu1 / mu1_exact_undamped(s.t), 1.0, 1e-8);
  }
}

TEST(Closedform, SolveNDamped) {
  for (double a : {0.1, 0.25, 0.4}) {
    const Mu1Path p = solve_N(a, {1e-11, 1e-13, 1e-7});
    ASSERT_TRUE(std::isfinite(p.T_div));
    EXPECT_LE(p.T_div, T_alpha_B_formula(a));
    for (const Mu1Sample& s : p.samples) EXPECT_GE(s.mu1, mu1_lower_bound(a, s.t) * (1 - 1e-9));
    // mu1 increases while N > 0
    for (std::size_t k = 1; k < p.samples.size(); ++k)
      if (p.samples[k].N > 0) {
        EXPECT_GT(p.samples[k].mu1, p.samples[k - 1].mu1);
      }
  }
  EXPECT_THROW(solve_N(0.5, {}), DomainError);
}

TEST(Closedform, SecondOrderFormAgrees) {
  // (N' - N^2/2 + alpha N)' = alpha N^2 integrated directly as a 2nd-order system
  const double a = 0.25;
  OdeProblem p;
  p.dim = 2;
  p.y0 = {1.0, 0.5 - a};
  p.rhs = [a](double, const State& y, State& dy) {
    dy[0] = y[1];
    dy[1] = a * y[0] * y[0] + y[0] * y[1] - a * y[1];
  };
  const OdeSolution s2 = integrate(p, 1.5, {1e-11, 1e-13});
  const Mu1Path path = solve_N(a, {1e-11, 1e-13, 1e-7});
  for (double t : {0.5, 1.0, 1.5}) EXPECT_NEAR(path.solution(t)[0], s2(t)[0], 1e-8);
}

TEST(Closedform, Jacobian) {
  const Mu1Path p = solve_N(0.0, {1e-11, 1e-13, 1e-7});
  EXPECT_NEAR(jacobian_part2(0.0, 0.3, 0.0, p), 1.0, 1e-15);
  EXPECT_NEAR(jacobian_part2(0.0, 0.0, 1.0, p), 0.25, 1e-15);
  EXPECT_NEAR(jacobian_part2(0.0, 0.25, 1.0, p), 4.0, 1e-12);
  EXPECT_THROW(jacobian_part2(0.0, 0.0, 2.5, p), DomainError);
  EXPECT_THROW(jacobian_part2(0.1, 0.0, 1.0, p), InvalidParams);
}

TEST(Closedform, BoundFormula) {
  EXPECT_NEAR(T_alpha_B_formula(0.25), 4 * std::log(2.0), 1e-14);
  EXPECT_NEAR(T_alpha_B_formula(0.4), -2.5 * std::log(0.2), 1e-14);
  EXPECT_NEAR(T_alpha_B_formula(1e-8), 2.0, 1e-7);
  EXPECT_EQ(T_alpha_B_formula(0.0), 2.0);
  EXPECT_THROW(T_alpha_B_formula(0.5), DomainError);
}

TEST(Closedform, InducedDataIsMeanZero) {
  // gamma0 = 1 + rho0 mu2'(0) with mu2'(0) = 2 and rho0 = -sin^2(2 pi x)
  const double pi = std::numbers::pi;
  for (double x : {0.0, 0.1, 0.37, 0.8}) {
    const double s = std::sin(2 * pi * x);
    EXPECT_NEAR(1.0 - 2.0 * s * s, std::cos(4 * pi * x), 1e-15);
  }
}

TEST(Closedform, AgreesWithCharacteristics) {
  const InitialData d = make_initial_data("cos(4*pi*x)", "-sin(2*pi*x)^2", 64);
  const Mu1Path p = solve_N(0.25, {1e-11, 1e-13, 1e-7});
  const std::vector<Point2> labels{{0.0, 0.3}, {0.1, 0.5}, {0.25, 0.0}, {0.4, 0.9}};
  for (double t : {0.5, 1.0, 0.95 * p.T_div}) {
    const CharState s = char_state_at(d, 0.25, t);
    const LabelField J = jacobian_at(d, s, labels);
    for (std::size_t k = 0; k < labels.size(); ++k)
      EXPECT_NEAR(J.values[k] / jacobian_part2(0.25, labels[k].x, t, p), 1.0, 1e-7);
  }
}
