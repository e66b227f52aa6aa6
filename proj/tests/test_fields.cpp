#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dampedlab/fields.hpp"

using namespace dampedlab;

namespace {
constexpr double kPi = std::numbers::pi;

bool has_point(const std::vector<Point2>& v, Point2 p, double tol) {
  for (const Point2& q : v)
    if (torus_distance(p, q) < tol) return true;
  return false;
}
}  // namespace

TEST(Fields, StripDataHasCurveMinima) {
  const InitialData d = make_initial_data("cos(4*pi*x)", "-sin(2*pi*x)^2", 64);
  EXPECT_NEAR(d.m0(), -1.0, 1e-12);
  EXPECT_TRUE(d.degenerate());
  ASSERT_FALSE(d.minima().empty());
  for (const Point2& p : d.minima()) {
    const double dx = std::min(std::abs(p.x - 0.25), std::abs(p.x - 0.75));
    EXPECT_LT(dx, 1e-6);
  }
}

TEST(Fields, ProductDataHasTwoRoundMinima) {
  const InitialData d = make_initial_data("cos(2*pi*x)*cos(2*pi*y)", "0", 64);
  EXPECT_NEAR(d.m0(), -1.0, 1e-12);
  EXPECT_FALSE(d.degenerate());
  ASSERT_EQ(d.minima().size(), 2u);
  EXPECT_TRUE(has_point(d.minima(), {0.0, 0.5}, 1e-7));
  EXPECT_TRUE(has_point(d.minima(), {0.5, 0.0}, 1e-7));
  // second-order Taylor expansion: gamma0 = -1 + 2 pi^2 (dx^2 + dy^2)
  for (const HessianEigs& e : d.hessian_eigs()) {
    EXPECT_NEAR(e.lambda1 / (4 * kPi * kPi), 1.0, 1e-5);
    EXPECT_NEAR(e.lambda2 / (4 * kPi * kPi), 1.0, 1e-5);
  }
  // finite-difference cross-check of the Hessian at (0, 1/2)
  const double h = 1e-4;
  const double gxx =
      (d.gamma0(h, 0.5) - 2 * d.gamma0(0.0, 0.5) + d.gamma0(-h, 0.5)) / (h * h);
  EXPECT_NEAR(gxx / (4 * kPi * kPi), 1.0, 1e-5);
}

TEST(Fields, MinimaSatisfyTheirInvariants) {
  const double quad_rel = 1e-12;
  const InitialData d = make_initial_data("cos(2*pi*x)*cos(2*pi*y) + 0.3*sin(2*pi*y)", "0", 64);
  for (const Point2& p : d.minima()) {
    EXPECT_LE(std::abs(d.gamma0(p) - d.m0()), 10 * quad_rel);
    const double h = 1e-6;
    const double gx = (d.gamma0(p.x + h, p.y) - d.gamma0(p.x - h, p.y)) / (2 * h);
    const double gy = (d.gamma0(p.x, p.y + h) - d.gamma0(p.x, p.y - h)) / (2 * h);
    EXPECT_LE(std::hypot(gx, gy), std::sqrt(quad_rel) * 10);
  }
  for (const HessianEigs& e : d.hessian_eigs()) EXPECT_GT(e.lambda2, 0.0);
}

TEST(Fields, MeanIsProjectedOut) {
  const InitialData d = make_initial_data("cos(2*pi*x) + 0.3", "0", 64);
  EXPECT_NEAR(d.mean_shift(), 0.3, 1e-12);
  const QuadResult q = integrate_q([&](double x, double y) { return d.gamma0(x, y); }, 1e-12);
  EXPECT_LE(std::abs(q.value), 1e-12);
  EXPECT_NEAR(d.m0(), -1.0, 1e-12);
}

TEST(Fields, ConstantFieldIsRejected) {
  EXPECT_THROW(make_initial_data("0", "0", 64), ConstantField);
  EXPECT_THROW(make_initial_data("2.5", "0", 64), ConstantField);
}

TEST(Fields, BadInputsAreRejected) {
  EXPECT_THROW(make_initial_data("cos(2*pi*x", "0", 64), ParseError);
  EXPECT_THROW(make_initial_data("cos(2*pi*x)", "0", 48), InvalidParams);
  Params p;
  p.grid_n = 100;
  EXPECT_THROW(p.validate(), InvalidParams);
  p.grid_n = 64;
  p.alpha = -0.1;
  EXPECT_THROW(p.validate(), InvalidParams);
  p.alpha = 0.1;
  p.tol.quad_rel = 0.0;
  EXPECT_THROW(p.validate(), InvalidParams);
}

TEST(Fields, AnsatzLift) {
  AnsatzValue v = eval_ansatz(2, 3, {0, 0}, 0);
  EXPECT_EQ(v.velocity, (std::array<double, 3>{0, 0, 0}));
  EXPECT_EQ(v.theta, 0.0);
  v = eval_ansatz(2, 3, {1, -1}, 2);
  EXPECT_EQ(v.velocity, (std::array<double, 3>{1, -1, 4}));
  EXPECT_EQ(v.theta, 6.0);
  v = eval_ansatz(-1, 0, {0, 0}, 1);
  EXPECT_EQ(v.velocity, (std::array<double, 3>{0, 0, -1}));
  EXPECT_EQ(v.theta, 0.0);
  // linear in z
  const AnsatzValue a = eval_ansatz(0.7, -0.2, {0.1, 0.3}, 1.5);
  const AnsatzValue b = eval_ansatz(0.7, -0.2, {0.1, 0.3}, 3.0);
  EXPECT_DOUBLE_EQ(b.velocity[2], 2 * a.velocity[2]);
  EXPECT_DOUBLE_EQ(b.theta, 2 * a.theta);
}

TEST(Fields, ExpressionGrammar) {
  const Expression e("2^3 - exp(0) + x*y/2 - -pi");
  EXPECT_NEAR(e(0.5, 0.5), 8 - 1 + 0.125 + kPi, 1e-14);
}
