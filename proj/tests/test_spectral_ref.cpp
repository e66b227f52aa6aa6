#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "dampedlab/bouss_char.hpp"
#include "dampedlab/euler_char.hpp"
#include "dampedlab/spectral_ref.hpp"

using namespace dampedlab;

namespace {

constexpr double pi = std::numbers::pi;

Field sample(int n, double (*f)(double, double)) {
  Field g(std::size_t(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g[std::size_t(i) * n + j] = f(double(i) / n, double(j) / n);
  return g;
}

double sup_abs(const Field& f) {
  double m = 0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST(Velocity, SingleMode) {
  const int n = 32;
  const Field g = sample(n, [](double x, double) { return std::cos(2 * pi * x); });
  const Velocity w = velocity_from_gamma(g, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = double(i) / n;
      EXPECT_NEAR(w.u[std::size_t(i) * n + j], -std::sin(2 * pi * x) / (2 * pi), 1e-14);
      EXPECT_NEAR(w.v[std::size_t(i) * n + j], 0.0, 1e-14);
    }
}

TEST(Velocity, ZeroField) {
  const Velocity w = velocity_from_gamma(Field(64, 0.0), 8);
  EXPECT_EQ(sup_abs(w.u), 0.0);
  EXPECT_EQ(sup_abs(w.v), 0.0);
}

TEST(Velocity, RandomBandlimitedField) {
  const int n = 128;
  std::mt19937 rng(7);
  std::normal_distribution<double> N01;
  Field g(std::size_t(n) * n, 0.0);
  for (int p = -8; p <= 8; ++p)
    for (int q = -8; q <= 8; ++q) {
      if (p == 0 && q == 0) continue;
      const double a = N01(rng), b = N01(rng);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double th = 2 * pi * (p * i + q * j) / double(n);
          g[std::size_t(i) * n + j] += a * std::cos(th) + b * std::sin(th);
        }
    }
  const Fft2 fft(n);
  const Velocity w = velocity_from_gamma(fft, g);
  Field r = divergence(fft, w);
  for (std::size_t k = 0; k < r.size(); ++k) r[k] += g[k];
  EXPECT_LE(sup_abs(r), 1e-10 * sup_abs(g));
  EXPECT_LE(sup_abs(vorticity(fft, w)), 1e-10 * sup_abs(g));
}

TEST(Velocity, RejectsNonZeroMean) {
  EXPECT_THROW(velocity_from_gamma(Field(64, 0.5), 8), NonZeroMean);
}

TEST(State, InitialInvariant) {
  const InitialData p2 = make_initial_data("cos(4*pi*x)", "-sin(2*pi*x)^2", 64);
  EXPECT_NEAR(diagnostics(make_spectral_state(p2, 32, {})).I, 1.5, 1e-13);
  const InitialData cc = make_initial_data("cos(2*pi*x)*cos(2*pi*y)", "0", 64);
  const SpectralDiagnostics d = diagnostics(make_spectral_state(cc, 32, {}));
  EXPECT_NEAR(d.I, 0.5, 1e-13);
  EXPECT_NEAR(d.mean_gamma, 0.0, 1e-15);
  EXPECT_NEAR(d.sup_gamma, 1.0, 1e-15);
}

TEST(Step, ZeroIsAFixedPoint) {
  SpectralState s;
  s.n = 16;
  s.gamma.assign(256, 0.0);
  s.rho.assign(256, 0.0);
  s.tracers.push_back({{0.3, 0.4}, {0.3, 0.4}, 1.0});
  for (int k = 0; k < 5; ++k) s = step(s, 0.5, 0.01);
  EXPECT_EQ(sup_abs(s.gamma), 0.0);
  EXPECT_EQ(sup_abs(s.rho), 0.0);
  EXPECT_EQ(s.tracers[0].X.x, 0.3);
  EXPECT_EQ(s.tracers[0].J, 1.0);
  EXPECT_NEAR(s.t, 0.05, 1e-15);
}

TEST(Step, CflViolation) {
  const InitialData cc = make_initial_data("cos(2*pi*x)*cos(2*pi*y)", "0", 64);
  const SpectralState s = make_spectral_state(cc, 64, {});
  EXPECT_THROW(step(s, 0.0, 1.0), CflViolation);
}

TEST(Run, MeanAndVorticityStayAtRoundoff) {
  const InitialData cc = make_initial_data("cos(2*pi*x)*cos(2*pi*y)", "0", 64);
  const SpectralRun r = run_spectral(cc, 0.2, 64, {0.25, 0.5}, {});
  ASSERT_FALSE(r.halted);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_LE(r.worst_mean, 1e-10);
  EXPECT_LE(r.worst_omega, 1e-10);
  EXPECT_NEAR(r.records[1].t, 0.5, 1e-15);
}

TEST(Run, TracerDensityMatchesJacobian) {
  const InitialData p2 = make_initial_data("cos(4*pi*x)", "-sin(2*pi*x)^2", 64);
  const std::vector<Point2> labels{{0.1, 0.2}, {0.3, 0.7}, {0.6, 0.5}};
  const SpectralRun r = run_spectral(p2, 0.0, 64, {0.5}, labels);
  ASSERT_EQ(r.records.size(), 1u);
  for (const TracerSample& t : r.records[0].tracers)
    EXPECT_NEAR(t.rho, p2.rho0(t.a) * t.J, 1e-6);
}

TEST(Run, AgreesWithCharacteristics) {
  const InitialData cc = make_initial_data("cos(2*pi*x)*cos(2*pi*y)", "0", 64);
  const double a = 0.3, t = 0.4;
  const std::vector<Point2> labels{{0.0, 0.5}, {0.15, 0.35}, {0.7, 0.05}};
  const SpectralRun r = run_spectral(cc, a, 64, {t}, labels);
  ASSERT_EQ(r.records.size(), 1u);
  const CharState s = char_state_at(cc, a, t);
  const LabelField J = jacobian_at(cc, s, labels);
  const LabelField g = gamma_euler_at(cc, a, labels, t);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    EXPECT_NEAR(r.records[0].tracers[k].J, J.values[k], 1e-5);
    EXPECT_NEAR(r.records[0].tracers[k].gamma, g.values[k], 1e-5);
  }
}
