#pragma once

// Reference solution for the strip data gamma0 = cos(4 pi x),
// rho0 = -sin^2(2 pi x). Along characteristics 1/J = mu1 cos^2 + sin^2 / mu1
// where mu1 = exp(Int N) and N solves N' = N^2/2 - alpha N + alpha W,
// W' = N^2, N(0) = 1, W(0) = 0.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dampedlab/errors.hpp"
#include "dampedlab/ode.hpp"

namespace dampedlab {

inline double mu1_exact_undamped(double t) {
  if (!(t >= 0.0 && t < 2.0)) {
    throw DomainError("mu1_exact_undamped needs 0 <= t < 2, got " + std::to_string(t));
  }
  const double s = 2.0 - t;
  return 4.0 / (s * s);
}

struct Mu1Sample {
  double t, N, W, mu1;
};

struct Mu1Path {
  double alpha = 0.0;
  std::vector<Mu1Sample> samples;  // one per accepted step
  double T_div = NAN;              // midpoint of the divergence bracket
  double t_lo = NAN, t_hi = NAN;
  OdeSolution solution;            // state (N, W, ln mu1)

  double mu1(double t) const {
    if (!(t >= 0.0 && t <= solution.t_end())) {
      throw DomainError("mu1 requested past the divergence bracket");
    }
    return std::exp(solution(t)[2]);
  }
};

inline void part2_rhs(double alpha, const State& y, State& dy) {
  const double N = y[0], W = y[1];
  dy[0] = 0.5 * N * N - alpha * N + alpha * W;
  dy[1] = N * N;
  dy[2] = N;
}

inline Mu1Path solve_N(double alpha, const OdeTolerances& tol, double t_cap = 50.0) {
  if (!(alpha >= 0.0 && alpha < 0.5)) {
    throw DomainError("solve_N needs 0 <= alpha < 1/2, got " + std::to_string(alpha));
  }
  OdeProblem p;
  p.dim = 3;
  p.t0 = 0.0;
  p.y0 = {1.0, 0.0, 0.0};
  p.rhs = [alpha](double, const State& y, State& dy) { part2_rhs(alpha, y, dy); };
  Mu1Path path;
  path.alpha = alpha;
  path.solution = integrate(p, t_cap, tol, [&](double t, const State& y) {
    path.samples.push_back({t, y[0], y[1], std::exp(y[2])});
  });
  const TerminalStatus& st = path.solution.status();
  if (st.kind == Terminal::BlowupBracketed) {
    path.t_lo = st.t_lo;
    path.t_hi = st.t_hi;
    path.T_div = 0.5 * (st.t_lo + st.t_hi);
  }
  return path;
}

inline double jacobian_part2(double alpha, double x, double t, const Mu1Path& path) {
  if (alpha != path.alpha) throw InvalidParams("jacobian_part2: path was solved for another alpha");
  if (!(t >= 0.0) || (std::isfinite(path.t_lo) && t > path.t_lo)) {
    throw DomainError("jacobian_part2: t = " + std::to_string(t) + " is outside the solved range");
  }
  const double m = (path.alpha == 0.0) ? mu1_exact_undamped(t) : path.mu1(t);
  const double c = std::cos(2.0 * std::numbers::pi * x), s = std::sin(2.0 * std::numbers::pi * x);
  return 1.0 / (m * c * c + s * s / m);
}

// Upper bound for the divergence time from the comparison z' >= e^{-at} z^2/2.
inline double T_alpha_B_formula(double alpha) {
  if (alpha == 0.0) return 2.0;
  if (!(alpha > 0.0 && alpha < 0.5)) {
    throw DomainError("T_alpha_B_formula needs 0 < alpha < 1/2, got " + std::to_string(alpha));
  }
  return -std::log1p(-2.0 * alpha) / alpha;
}

inline double mu1_lower_bound(double alpha, double t) {
  if (alpha == 0.0) return mu1_exact_undamped(t);
  const double d = std::exp(-alpha * t) - (1.0 - 2.0 * alpha);
  return 4.0 * alpha * alpha / (d * d);
}

}  // namespace dampedlab
