#pragma once

// Quadrature over the periodic unit square Q = [0,1)^2.
//
// Two rule families are provided:
//  * integrate_q: nested periodic trapezoid (equispaced tensor grid), the
//    workhorse for smooth periodic integrands.
//  * AxisRule / ProductRule: per-axis double-exponential (tanh-sinh) panels
//    between breakpoints, used when the integrand is near-singular at known
//    coordinates. Each level halves the step in the transformed variable, so
//    levels are nested exactly like the trapezoid levels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

#include "dampedlab/errors.hpp"

namespace dampedlab {

struct QuadResult {
  double value = 0.0;
  double err_estimate = 0.0;  // |Q_finest - Q_previous|
  int levels_used = 0;
  bool converged = false;     // false: level cap hit with err > rel_tol * scale
};

struct TrapezoidOptions {
  int first_level = 2;  // 2^first_level points per axis on the first sweep
  int max_level = 12;   // cap: 4096 points per axis
};

// Periodic trapezoid on an equispaced tensor grid, doubled until two
// successive levels agree. The agreement scale is max(|Q|, Q[|f|]) so that
// mean-zero integrands converge in the absolute sense.
inline QuadResult integrate_q(const std::function<double(double, double)>& f, double rel_tol,
                              TrapezoidOptions opts = {}) {
  if (!(rel_tol > 0.0)) throw InvalidParams("integrate_q: rel_tol must be positive");
  auto sample = [&](double x, double y) {
    const double v = f(x, y);
    if (!std::isfinite(v)) {
      throw NonFiniteSample("integrand is not finite at (" + std::to_string(x) + ", " +
                            std::to_string(y) + ")");
    }
    return v;
  };

  QuadResult res;
  double sum = 0.0, abs_sum = 0.0;
  std::size_t n = std::size_t{1} << opts.first_level;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = sample(double(i) / double(n), double(j) / double(n));
      sum += v;
      abs_sum += std::abs(v);
    }
  }
  double prev = sum / double(n * n);
  res.value = prev;
  res.levels_used = 1;
  for (int level = opts.first_level + 1; level <= opts.max_level; ++level) {
    const std::size_t m = 2 * n;
    // Only the points that are new at this level: i or j odd.
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t jstep = (i % 2 == 0) ? 2 : 1;
      const std::size_t j0 = (i % 2 == 0) ? 1 : 0;
      for (std::size_t j = j0; j < m; j += jstep) {
        const double v = sample(double(i) / double(m), double(j) / double(m));
        sum += v;
        abs_sum += std::abs(v);
      }
    }
    n = m;
    const double cur = sum / double(n * n);
    const double scale = std::max(std::abs(cur), abs_sum / double(n * n));
    res.value = cur;
    res.err_estimate = std::abs(cur - prev);
    ++res.levels_used;
    if (res.err_estimate <= rel_tol * scale) {
      res.converged = true;
      return res;
    }
    prev = cur;
  }
  return res;
}

// One-dimensional rule on the periodic interval [0,1).
struct Rule1D {
  std::vector<double> x;
  std::vector<double> w;
  // Node i is exactly base[i] + off[i]. Next to a breakpoint the offset is
  // far below the spacing of doubles near the breakpoint itself.
  std::vector<double> base, off;
};

// Per-axis rule. Without breakpoints it is the periodic trapezoid with
// 8 * 2^level points. With breakpoints c_0 < ... < c_{m-1} it applies the
// tanh-sinh map on every panel [c_k, c_{k+1}] (the last panel wraps), so
// nodes cluster double-exponentially at the breakpoints.
class AxisRule {
 public:
  static constexpr double kStep0 = 0.5;  // transformed step at level 0
  static constexpr double kTMax = 3.5;   // truncation of the transformed variable

  AxisRule() = default;
  explicit AxisRule(std::vector<double> breakpoints) : breaks_(std::move(breakpoints)) {
    for (double& c : breaks_) c -= std::floor(c);
    std::sort(breaks_.begin(), breaks_.end());
    breaks_.erase(std::unique(breaks_.begin(), breaks_.end(),
                              [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                  breaks_.end());
    if (breaks_.size() > 1 && breaks_.back() - breaks_.front() > 1.0 - 1e-12) breaks_.pop_back();
  }

  const std::vector<double>& breakpoints() const { return breaks_; }
  bool graded() const { return !breaks_.empty(); }

  Rule1D level(int l) const {
    Rule1D r;
    if (breaks_.empty()) {
      const std::size_t n = std::size_t{8} << l;
      r.x.resize(n);
      r.w.assign(n, 1.0 / double(n));
      for (std::size_t i = 0; i < n; ++i) r.x[i] = double(i) / double(n);
      r.base = r.x;
      r.off.assign(n, 0.0);
      return r;
    }
    const double h = kStep0 / double(1 << l);
    const int kmax = int(std::floor(kTMax / h));
    for (std::size_t p = 0; p < breaks_.size(); ++p) {
      const double a = breaks_[p];
      const double b = (p + 1 < breaks_.size()) ? breaks_[p + 1] : breaks_[0] + 1.0;
      const double len = b - a;
      for (int k = -kmax; k <= kmax; ++k) {
        const double t = k * h;
        const double u = 0.5 * std::numbers::pi * std::sinh(t);
        const double e = std::exp(-2.0 * std::abs(u));
        // Distance to the nearer endpoint, formed without cancellation.
        const double near = len * e / (1.0 + e);
        double base = (t < 0.0) ? a : (t > 0.0 ? b : a + 0.5 * len);
        const double off = (t < 0.0) ? near : (t > 0.0 ? -near : 0.0);
        base -= std::floor(base);
        const double ch = std::cosh(u);
        const double w = 0.5 * len * h * 0.5 * std::numbers::pi * std::cosh(t) / (ch * ch);
        double x = base + off;
        x -= std::floor(x);
        r.x.push_back(x);
        r.base.push_back(base);
        r.off.push_back(off);
        r.w.push_back(w);
      }
    }
    return r;
  }

 private:
  std::vector<double> breaks_;
};

}  // namespace dampedlab
