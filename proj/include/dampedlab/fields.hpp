#pragma once

// Periodic domain Q = [0,1)^2, initial data (gamma0, rho0) and the analysis
// of gamma0's minima, plus the linear-in-z lift back to three dimensions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dampedlab/errors.hpp"
#include "dampedlab/expression.hpp"
#include "dampedlab/quadrature.hpp"

namespace dampedlab {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

// Shortest displacement on the unit torus.
inline double torus_delta(double a, double b) {
  double d = a - b;
  d -= std::round(d);
  return d;
}
inline double torus_distance(Point2 p, Point2 q) {
  return std::hypot(torus_delta(p.x, q.x), torus_delta(p.y, q.y));
}

struct Tolerances {
  double ode_rel = 1e-11;
  double ode_abs = 1e-13;
  double quad_rel = 1e-12;
  double event_tol = 1e-6;
};

struct Params {
  double alpha = 0.0;
  int grid_n = 64;
  Tolerances tol;

  void validate() const {
    if (!(alpha >= 0.0)) throw InvalidParams("alpha must be >= 0");
    if (grid_n < 16 || (grid_n & (grid_n - 1)) != 0) {
      throw InvalidParams("grid_n must be a power of two >= 16, got " + std::to_string(grid_n));
    }
    if (!(tol.ode_rel > 0 && tol.ode_abs > 0 && tol.quad_rel > 0 && tol.event_tol > 0)) {
      throw InvalidParams("all tolerances must be positive");
    }
  }
};

// Values attached to Lagrangian labels.
struct LabelField {
  std::vector<Point2> labels;
  std::vector<double> values;
};

struct HessianEigs {
  double lambda1 = 0.0;  // larger
  double lambda2 = 0.0;  // smaller
  // Unit eigenvector of lambda2 (the weak direction; along the valley for
  // curve minima).
  double weak_dir_x = 1.0;
  double weak_dir_y = 0.0;
};

namespace detail {

struct Symmetric2 {
  double xx, xy, yy;
};

// Eigen-decomposition of a symmetric 2x2 matrix; eigenvalues descending.
inline HessianEigs eig2(const Symmetric2& h) {
  const double mean = 0.5 * (h.xx + h.yy);
  const double diff = 0.5 * (h.xx - h.yy);
  const double rad = std::hypot(diff, h.xy);
  HessianEigs e;
  e.lambda1 = mean + rad;
  e.lambda2 = mean - rad;
  // eigenvector for lambda2
  double vx, vy;
  if (rad == 0.0) {
    vx = 1.0;
    vy = 0.0;
  } else if (diff <= 0.0) {
    vx = rad - diff;
    vy = -h.xy;
  } else {
    vx = -h.xy;
    vy = rad + diff;
  }
  const double nrm = std::hypot(vx, vy);
  e.weak_dir_x = vx / nrm;
  e.weak_dir_y = vy / nrm;
  return e;
}

template <class F>
std::array<double, 2> gradient(const F& f, Point2 p) {
  // Richardson-combined central differences, O(h^4).
  constexpr double h = 1e-4;
  auto d = [&](double dx, double dy, double s) {
    return (f(p.x + s * dx, p.y + s * dy) - f(p.x - s * dx, p.y - s * dy)) / (2.0 * s);
  };
  const double gx = (4.0 * d(1, 0, h / 2) - d(1, 0, h)) / 3.0;
  const double gy = (4.0 * d(0, 1, h / 2) - d(0, 1, h)) / 3.0;
  return {gx, gy};
}

template <class F>
Symmetric2 hessian(const F& f, Point2 p) {
  auto at = [&](double s) {
    const double f0 = f(p.x, p.y);
    Symmetric2 h;
    h.xx = (f(p.x + s, p.y) - 2.0 * f0 + f(p.x - s, p.y)) / (s * s);
    h.yy = (f(p.x, p.y + s) - 2.0 * f0 + f(p.x, p.y - s)) / (s * s);
    h.xy = (f(p.x + s, p.y + s) - f(p.x + s, p.y - s) - f(p.x - s, p.y + s) +
            f(p.x - s, p.y - s)) /
           (4.0 * s * s);
    return h;
  };
  const Symmetric2 a = at(2e-3), b = at(1e-3);
  return {(4.0 * b.xx - a.xx) / 3.0, (4.0 * b.xy - a.xy) / 3.0, (4.0 * b.yy - a.yy) / 3.0};
}

}  // namespace detail

class MomentCache;  // moments.hpp
class InitialData;
namespace detail {
inline std::shared_ptr<const MomentCache> make_moment_cache(const InitialData& d);
}

struct InitialDataOptions {
  double quad_rel = 1e-12;
  double event_tol = 1e-6;
  bool allow_nonnegative_minimum = false;
};

// The pair (gamma0, rho0) with its minima analysis. Copies share the lazily
// filled quadrature sample cache.
class InitialData {
 public:
  double gamma0(double x, double y) const { return gamma_expr_(x, y) - mean_shift_; }
  double gamma0(Point2 p) const { return gamma0(p.x, p.y); }
  double rho0(double x, double y) const { return rho_zero_ ? 0.0 : rho_expr_(x, y); }
  double rho0(Point2 p) const { return rho0(p.x, p.y); }

  const Expression& gamma0_expression() const { return gamma_expr_; }
  const Expression& rho0_expression() const { return rho_expr_; }
  bool rho0_is_zero() const { return rho_zero_; }

  double m0() const { return m0_; }
  double tau_star() const { return -1.0 / m0_; }
  const std::vector<Point2>& minima() const { return minima_; }
  const std::vector<HessianEigs>& hessian_eigs() const { return eigs_; }
  bool degenerate() const { return degenerate_; }
  double mean_shift() const { return mean_shift_; }
  // Location and value of the global maximum of gamma0 (grid + Newton).
  Point2 max_point() const { return max_point_; }
  double max_value() const { return max_value_; }
  int grid_n() const { return grid_n_; }

  // Denominators are carried relative to the first minimum a_ref:
  //   D(a) = d0 + (gamma0(a) - g_ref) tau - (rho0(a) - r_ref) sigma,
  //   d0   = 1 + g_ref tau - r_ref sigma,
  // so that D keeps full relative precision where it is smallest.
  Point2 ref_point() const { return minima_.front(); }
  double g_ref() const { return g_ref_; }
  double r_ref() const { return r_ref_; }
  double ref_denominator(double tau, double sigma) const {
    return 1.0 + g_ref_ * tau - r_ref_ * sigma;
  }
  double tau_from_ref(double d0, double sigma) const {
    return (d0 - 1.0 + r_ref_ * sigma) / g_ref_;
  }
  double denominator(Point2 a, double d0, double tau, double sigma) const {
    return d0 + (gamma0(a) - g_ref_) * tau - (rho0(a) - r_ref_) * sigma;
  }

  const MomentCache& moment_cache() const { return *cache_; }

 private:
  friend InitialData make_initial_data(std::string_view, std::string_view, int,
                                       const InitialDataOptions&);
  Expression gamma_expr_;
  Expression rho_expr_;
  bool rho_zero_ = false;
  double mean_shift_ = 0.0;
  double m0_ = 0.0;
  std::vector<Point2> minima_;
  std::vector<HessianEigs> eigs_;
  bool degenerate_ = false;
  Point2 max_point_;
  double max_value_ = 0.0;
  int grid_n_ = 64;
  double g_ref_ = -1.0, r_ref_ = 0.0;
  std::shared_ptr<const MomentCache> cache_;
};

namespace detail {

// Newton iteration on the gradient, restricted to directions of positive
// curvature so that valleys (curve minima) are handled.
template <class F>
Point2 refine_extremum(const F& f, Point2 p, double sign) {
  auto g = [&](double x, double y) { return sign * f(x, y); };
  for (int it = 0; it < 50; ++it) {
    const auto grad = gradient(g, p);
    const HessianEigs e = eig2(hessian(g, p));
    const double thr = 1e-8 * std::max(1.0, std::abs(e.lambda1));
    double sx = 0.0, sy = 0.0;
    // strong direction is orthogonal to the weak one
    const double ux = -e.weak_dir_y, uy = e.weak_dir_x;
    if (e.lambda1 > thr) {
      const double c = (grad[0] * ux + grad[1] * uy) / e.lambda1;
      sx -= c * ux;
      sy -= c * uy;
    }
    if (e.lambda2 > thr) {
      const double c = (grad[0] * e.weak_dir_x + grad[1] * e.weak_dir_y) / e.lambda2;
      sx -= c * e.weak_dir_x;
      sy -= c * e.weak_dir_y;
    }
    const double step = std::hypot(sx, sy);
    if (step > 0.05) {  // stay local; the grid scan already bracketed it
      sx *= 0.05 / step;
      sy *= 0.05 / step;
    }
    p.x += sx;
    p.y += sy;
    p.x -= std::floor(p.x);
    p.y -= std::floor(p.y);
    if (step < 1e-15) break;
  }
  return p;
}

template <class F>
std::size_t count_near_min(const F& f, int n, double m0, double band) {
  std::size_t count = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (f(double(i) / n, double(j) / n) <= m0 + band) ++count;
  return count;
}

}  // namespace detail

inline InitialData make_initial_data(std::string_view gamma0_spec, std::string_view rho0_spec,
                                     int grid_n, const InitialDataOptions& opts = {}) {
  if (grid_n < 16 || (grid_n & (grid_n - 1)) != 0) {
    throw InvalidParams("grid_n must be a power of two >= 16, got " + std::to_string(grid_n));
  }
  InitialData d;
  d.gamma_expr_ = Expression(gamma0_spec);
  d.rho_expr_ = Expression(rho0_spec);
  d.rho_zero_ = d.rho_expr_.is_zero_literal();
  d.grid_n_ = grid_n;

  const QuadResult mean =
      integrate_q([&](double x, double y) { return d.gamma_expr_(x, y); }, opts.quad_rel);
  if (std::abs(mean.value) > opts.quad_rel) d.mean_shift_ = mean.value;

  auto g = [&d](double x, double y) { return d.gamma0(x, y); };
  const int n = grid_n;
  std::vector<double> grid(std::size_t(n) * n);
  double gmax = -INFINITY, gmin = INFINITY, amax = 0.0;
  int imax = 0, jmax = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double v = g(double(i) / n, double(j) / n);
      grid[std::size_t(i) * n + j] = v;
      amax = std::max(amax, std::abs(v));
      gmin = std::min(gmin, v);
      if (v > gmax) {
        gmax = v;
        imax = i;
        jmax = j;
      }
    }
  }
  if (amax <= 1e-13) throw ConstantField("gamma0 vanishes identically after mean projection");

  // Grid local minima (non-strict, 8-neighbourhood, periodic) are refined.
  auto at = [&](int i, int j) { return grid[std::size_t((i + n) % n) * n + std::size_t((j + n) % n)]; };
  std::vector<Point2> refined;
  std::vector<double> refined_val;
  const double coarse_band = std::max(0.25 * (gmax - gmin), opts.event_tol);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double v = at(i, j);
      if (v > gmin + coarse_band) continue;
      bool is_min = true;
      for (int di = -1; di <= 1 && is_min; ++di)
        for (int dj = -1; dj <= 1; ++dj)
          if ((di || dj) && at(i + di, j + dj) < v) {
            is_min = false;
            break;
          }
      if (!is_min) continue;
      const Point2 p = detail::refine_extremum(g, {double(i) / n, double(j) / n}, 1.0);
      refined.push_back(p);
      refined_val.push_back(g(p.x, p.y));
    }
  }
  const auto best = std::min_element(refined_val.begin(), refined_val.end());
  d.m0_ = *best;
  // the exact argmin goes first; it is the reference label for denominators
  std::rotate(refined.begin(), refined.begin() + (best - refined_val.begin()),
              refined.begin() + (best - refined_val.begin()) + 1);
  std::rotate(refined_val.begin(), best, best + 1);
  if (d.m0_ >= 0.0 && !opts.allow_nonnegative_minimum) {
    throw NonNegativeMinimum("min gamma0 = " + std::to_string(d.m0_) + " is not negative");
  }
  for (std::size_t k = 0; k < refined.size(); ++k) {
    if (refined_val[k] > d.m0_ + opts.event_tol) continue;
    bool dup = false;
    for (const Point2& q : d.minima_)
      if (torus_distance(q, refined[k]) < 1e-6) dup = true;
    if (dup) continue;
    d.minima_.push_back(refined[k]);
    d.eigs_.push_back(detail::eig2(detail::hessian(g, refined[k])));
  }

  // Curve minima: the number of grid points within the band grows with n.
  const double band = std::max(opts.event_tol, 1e-9);
  const std::size_t c1 = detail::count_near_min(g, n, d.m0_, band);
  const std::size_t c2 = detail::count_near_min(g, 2 * n, d.m0_, band);
  bool flat = false;
  for (const HessianEigs& e : d.eigs_)
    if (e.lambda2 <= 1e-6 * std::max(1.0, e.lambda1)) flat = true;
  d.degenerate_ = flat || (c1 >= 8 && double(c2) >= 1.5 * double(c1));

  d.g_ref_ = d.m0_;
  d.r_ref_ = d.rho0(d.minima_.front());
  d.max_point_ = detail::refine_extremum(g, {double(imax) / n, double(jmax) / n}, -1.0);
  d.max_value_ = g(d.max_point_.x, d.max_point_.y);

  d.cache_ = detail::make_moment_cache(d);
  return d;
}

// Pseudo-random labels, reproducible across platforms for a given seed.
inline std::vector<Point2> generic_labels(std::uint64_t seed, int count = 8) {
  std::mt19937_64 rng(seed);
  auto unit = [&rng] { return double(rng() >> 11) * 0x1.0p-53; };
  std::vector<Point2> out(static_cast<std::size_t>(count));
  for (Point2& p : out) {
    p.x = unit();
    p.y = unit();
  }
  return out;
}

inline std::vector<Point2> uniform_labels(int n) {
  std::vector<Point2> out;
  out.reserve(std::size_t(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.push_back({(i + 0.5) / n, (j + 0.5) / n});
  return out;
}

// Minima to watch: all of them for isolated minima, a handful spread along
// the set when the minima form curves.
inline std::vector<Point2> watch_minima(const InitialData& d, std::size_t cap = 4) {
  const auto& m = d.minima();
  if (m.size() <= cap) return m;
  std::vector<Point2> out;
  for (std::size_t k = 0; k < cap; ++k) out.push_back(m[k * m.size() / cap]);
  return out;
}

// Lift of the reduced fields to three dimensions:
// velocity (u, v, z*gamma), temperature z*rho.
struct AnsatzValue {
  std::array<double, 3> velocity;
  double theta;
};
inline AnsatzValue eval_ansatz(double gamma, double rho, std::array<double, 2> uv, double z) {
  return {{uv[0], uv[1], z * gamma}, z * rho};
}

}  // namespace dampedlab

#include "dampedlab/moments.hpp"
