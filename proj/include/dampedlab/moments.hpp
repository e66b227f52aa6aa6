#pragma once

// The three moments of the denominator D = 1 + gamma0*tau - rho0*sigma:
//   phi1 = Int 1/D,  Kbar2 = Int gamma0/D^2,  Lbar2 = Int rho0/D^2.
// D is assembled as d0 + (gamma0 - g_ref) tau - (rho0 - r_ref) sigma (see
// InitialData::denominator); callers that track d0 themselves pass it in.
//
// Near the singular time D is O(tau* - tau) in an O(sqrt(tau* - tau)) (or
// thinner) neighbourhood of the minima of gamma0, far below what a uniform
// tensor grid can resolve. The sweep therefore uses a product of AxisRules
// whose breakpoints sit on the minima coordinates, and samples of gamma0 and
// rho0 are cached per level so that repeated calls only pay for the
// reduction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dampedlab/errors.hpp"
#include "dampedlab/expression.hpp"
#include "dampedlab/fields.hpp"
#include "dampedlab/quadrature.hpp"

namespace dampedlab {

struct LevelSamples {
  std::vector<double> x, y;    // nodes per axis
  std::vector<double> xb, xo, yb, yo;  // node = base + offset, exactly
  std::vector<double> wx, wy;  // weights per axis
  std::vector<double> g;       // gamma0 - g_ref at (x[i], y[j]), row i
  std::vector<double> r;       // rho0 - r_ref, empty when rho0 = 0
  std::size_t nx() const { return x.size(); }
  std::size_t ny() const { return y.size(); }
};

class MomentCache {
 public:
  static constexpr int kMaxLevel = 6;

  explicit MomentCache(const InitialData& d)
      : gamma_(d.gamma0_expression()),
        rho_(d.rho0_expression()),
        rho_zero_(d.rho0_is_zero()),
        shift_(d.mean_shift()),
        g_ref_(d.g_ref()),
        r_ref_(d.r_ref()) {
    std::vector<double> bx, by;
    for (std::size_t k = 0; k < d.minima().size(); ++k) {
      const Point2 p = d.minima()[k];
      const HessianEigs& e = d.hessian_eigs()[k];
      const bool flat = e.lambda2 <= 1e-6 * std::max(1.0, e.lambda1);
      if (!flat) {
        bx.push_back(p.x);
        by.push_back(p.y);
      } else if (std::abs(e.weak_dir_x) < 1e-6) {
        bx.push_back(p.x);  // valley along y: singular in x only
      } else if (std::abs(e.weak_dir_y) < 1e-6) {
        by.push_back(p.y);
      } else {
        bx.push_back(p.x);
        by.push_back(p.y);
      }
    }
    ax_ = AxisRule(bx);
    ay_ = AxisRule(by);
  }
  MomentCache(const MomentCache&) = delete;
  MomentCache& operator=(const MomentCache&) = delete;

  const AxisRule& x_rule() const { return ax_; }
  const AxisRule& y_rule() const { return ay_; }

  // Tensor rule with level lx on x and ly on y.
  const LevelSamples& level(int lx, int ly) const {
    if (lx < 0 || lx > kMaxLevel || ly < 0 || ly > kMaxLevel) {
      throw InvalidParams("quadrature level out of range");
    }
    const int k = lx * (kMaxLevel + 1) + ly;
    std::call_once(once_[k], [&] { levels_[k] = build(lx, ly); });
    return *levels_[k];
  }
  const LevelSamples& level(int l) const { return level(l, l); }

 private:
  static constexpr int kSlots = (kMaxLevel + 1) * (kMaxLevel + 1);
  static constexpr long double kWide = 1e-4L;

  std::unique_ptr<LevelSamples> build(int lx, int ly) const {
    auto s = std::make_unique<LevelSamples>();
    Rule1D rx = ax_.level(lx), ry = ay_.level(ly);
    s->x = std::move(rx.x);
    s->xb = std::move(rx.base);
    s->xo = std::move(rx.off);
    s->wx = std::move(rx.w);
    s->y = std::move(ry.x);
    s->yb = std::move(ry.base);
    s->yo = std::move(ry.off);
    s->wy = std::move(ry.w);
    const std::size_t nx = s->nx(), ny = s->ny();
    s->g.resize(nx * ny);
    if (!rho_zero_) s->r.resize(nx * ny);
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t j = 0; j < ny; ++j) {
        // Next to a minimum gamma0 - g_ref cancels; redo those samples in
        // quad precision so that it keeps its relative accuracy.
        const long double xi = (long double)s->xb[i] + s->xo[i];
        const long double yj = (long double)s->yb[j] + s->yo[j];
        long double g = gamma_.eval(xi, yj) - shift_ - g_ref_;
        long double r = rho_zero_ ? 0.0L : rho_.eval(xi, yj) - r_ref_;
        if (std::abs(g) < kWide || (!rho_zero_ && std::abs(r) < kWide)) {
          const detail::quad xq = (detail::quad)s->xb[i] + s->xo[i];
          const detail::quad yq = (detail::quad)s->yb[j] + s->yo[j];
          g = (long double)(gamma_.eval(xq, yq) - shift_ - g_ref_);
          if (!rho_zero_) r = (long double)(rho_.eval(xq, yq) - r_ref_);
        }
        s->g[i * ny + j] = static_cast<double>(g);
        if (!rho_zero_) s->r[i * ny + j] = static_cast<double>(r);
      }
    }
    return s;
  }

  Expression gamma_, rho_;
  bool rho_zero_;
  double shift_, g_ref_, r_ref_;
  AxisRule ax_, ay_;
  mutable std::array<std::once_flag, kSlots> once_;
  mutable std::array<std::unique_ptr<LevelSamples>, kSlots> levels_;
};

namespace detail {
inline std::shared_ptr<const MomentCache> make_moment_cache(const InitialData& d) {
  return std::make_shared<const MomentCache>(d);
}
}  // namespace detail

struct Moments {
  double phi1 = 1.0;
  double Kbar2 = 0.0;
  double Lbar2 = 0.0;
  double err = 0.0;          // largest scaled change between the two finest levels
  double noise_floor = 0.0;  // rounding floor of that change
  double d_min = 1.0;        // smallest sampled denominator
  double phi1_coarse = 1.0;  // phi1 with one axis a level coarser (the worse one)
  int level_x = 0, level_y = 0;
  bool converged = false;
};

struct MomentOptions {
  int min_level = 1;  // starting level on both axes
  int max_level = MomentCache::kMaxLevel;
  // Starting levels per axis (e.g. from the previous call); override
  // min_level when set.
  int start_x = -1, start_y = -1;
  // Refine both axes this many levels past the first converged pair.
  int extra_levels = 0;
  // Skip the Kbar2/Lbar2 sums (convergence is then judged on phi1 alone).
  bool phi_only = false;
};

namespace detail {

struct MomentSums {
  double phi = 0, K = 0, Kabs = 0, L = 0, Labs = 0;
  double dmin = INFINITY;
};

[[noreturn]] inline void throw_sign_change(const LevelSamples& s, std::size_t i, std::size_t j,
                                           double D, double tau) {
  throw DenominatorSignChange("1 + gamma0*tau - rho0*sigma = " + std::to_string(D) + " at (" +
                              std::to_string(s.x[i]) + ", " + std::to_string(s.y[j]) +
                              "), tau = " + std::to_string(tau));
}

struct SweepArgs {
  double d0, tau, sigma, g_ref, r_ref;
};

inline MomentSums moment_sums(const LevelSamples& s, const SweepArgs& a, bool phi_only = false) {
  MomentSums m;
  const std::size_t nx = s.nx(), ny = s.ny();
  const bool has_rho = !s.r.empty();
  for (std::size_t i = 0; i < nx; ++i) {
    double phi = 0, K = 0, Kabs = 0, L = 0, Labs = 0, dmin = INFINITY;
    const double* g = &s.g[i * ny];
    const double* r = has_rho ? &s.r[i * ny] : nullptr;
    if (phi_only) {
      for (std::size_t j = 0; j < ny; ++j) {
        const double D = a.d0 + g[j] * a.tau - (has_rho ? r[j] * a.sigma : 0.0);
        if (!(D > 0.0)) throw_sign_change(s, i, j, D, a.tau);
        dmin = std::min(dmin, D);
        phi += s.wy[j] / D;
      }
      m.phi += s.wx[i] * phi;
      m.dmin = std::min(m.dmin, dmin);
      continue;
    }
    for (std::size_t j = 0; j < ny; ++j) {
      const double rd = has_rho ? r[j] : 0.0;
      const double D = a.d0 + g[j] * a.tau - rd * a.sigma;
      if (!(D > 0.0)) throw_sign_change(s, i, j, D, a.tau);
      dmin = std::min(dmin, D);
      const double gv = g[j] + a.g_ref, rv = has_rho ? rd + a.r_ref : 0.0;
      const double inv = 1.0 / D;
      const double w = s.wy[j];
      const double wi2 = w * inv * inv;
      phi += w * inv;
      K += gv * wi2;
      Kabs += std::abs(gv) * wi2;
      L += rv * wi2;
      Labs += std::abs(rv) * wi2;
    }
    const double w = s.wx[i];
    m.phi += w * phi;
    m.K += w * K;
    m.Kabs += w * Kabs;
    m.L += w * L;
    m.Labs += w * Labs;
    m.dmin = std::min(m.dmin, dmin);
  }
  return m;
}

}  // namespace detail

// Each axis is refined independently: the integrand is often near-singular
// in one direction only, and a tensor doubling would waste the other axis.
inline Moments moment_integrals_ref(const InitialData& data, double d0, double tau, double sigma,
                                    double rel_tol, MomentOptions opts = {}) {
  const MomentCache& cache = data.moment_cache();
  const detail::SweepArgs args{d0, tau, sigma, data.g_ref(), data.r_ref()};
  const int hi = std::min(opts.max_level, MomentCache::kMaxLevel);
  int lx = std::clamp(opts.start_x >= 0 ? opts.start_x : opts.min_level, 1, hi);
  int ly = std::clamp(opts.start_y >= 0 ? opts.start_y : opts.min_level, 1, hi);
  auto sums = [&](int a, int b) {
    return detail::moment_sums(cache.level(a, b), args, opts.phi_only);
  };
  auto change = [](const detail::MomentSums& f, const detail::MomentSums& c) {
    const double e_phi = std::abs(f.phi - c.phi) / f.phi;
    const double e_K = f.Kabs > 0 ? std::abs(f.K - c.K) / f.Kabs : 0.0;
    const double e_L = f.Labs > 0 ? std::abs(f.L - c.L) / f.Labs : 0.0;
    return std::max({e_phi, e_K, e_L});
  };
  Moments out;
  int extra = -1;
  for (;;) {
    const detail::MomentSums cur = sums(lx, ly);
    const detail::MomentSums cx = sums(lx - 1, ly);
    const detail::MomentSums cy = sums(lx, ly - 1);
    const double ex = change(cur, cx), ey = change(cur, cy);
    out.phi1 = cur.phi;
    out.Kbar2 = cur.K;
    out.Lbar2 = cur.L;
    out.phi1_coarse = ex >= ey ? cx.phi : cy.phi;
    out.err = std::max(ex, ey);
    out.level_x = lx;
    out.level_y = ly;
    out.d_min = cur.dmin;
    // D is assembled from terms of its own size near the minima, so the
    // per-node rounding is relative and the sums agree to a few ulps at best.
    out.noise_floor = 16.0 * std::numeric_limits<double>::epsilon();
    const double tol = std::max(rel_tol, out.noise_floor);
    if (extra < 0 && out.err <= tol) {
      out.converged = true;
      extra = 0;
    }
    if (extra >= 0) {
      if (extra++ >= opts.extra_levels || (lx == hi && ly == hi)) break;
      lx = std::min(lx + 1, hi);
      ly = std::min(ly + 1, hi);
      continue;
    }
    const bool up_x = ex > tol && lx < hi, up_y = ey > tol && ly < hi;
    if (!up_x && !up_y) break;  // cap reached on every unconverged axis
    if (up_x) ++lx;
    if (up_y) ++ly;
  }
  return out;
}

inline Moments moment_integrals(const InitialData& data, double tau, double sigma, double rel_tol,
                                MomentOptions opts = {}) {
  return moment_integrals_ref(data, data.ref_denominator(tau, sigma), tau, sigma, rel_tol, opts);
}

// Plain trapezoid version of phi1 for cross-checks.
inline double phi1_trapezoid(const InitialData& data, double tau, double sigma, double rel_tol) {
  return integrate_q(
             [&](double x, double y) {
               return 1.0 / (1.0 + data.gamma0(x, y) * tau - data.rho0(x, y) * sigma);
             },
             rel_tol)
      .value;
}

// Quadrature levels carried from one call to the next along a trajectory.
struct LevelHint {
  int x = 1, y = 1;
  MomentOptions options(bool phi_only) const {
    MomentOptions o;
    o.start_x = x;
    o.start_y = y;
    o.phi_only = phi_only;
    return o;
  }
  void update(const Moments& m) {
    x = m.level_x;
    y = m.level_y;
  }
};

namespace detail {

// Moments on a characteristic trajectory: a denominator that has reached
// zero, or a sweep that cannot resolve it, ends the step.
inline Moments char_moments(const InitialData& d, double d0, double tau, double sigma,
                            double quad_rel, MomentOptions opts) {
  Moments m;
  try {
    m = moment_integrals_ref(d, d0, tau, sigma, quad_rel, opts);
  } catch (const DenominatorSignChange& e) {
    throw IntegrandBlowup(e.what());
  }
  if (!m.converged) {
    throw IntegrandBlowup("moment quadrature did not converge (err " + std::to_string(m.err) +
                          ") at tau = " + std::to_string(tau));
  }
  return m;
}

}  // namespace detail

// Int J over Q evaluated node by node on the rule that defined phi1.
inline double jacobian_mass(const InitialData& d, double d0, double tau, double sigma,
                            double phi1, int level_x, int level_y) {
  const LevelSamples& s = d.moment_cache().level(level_x, level_y);
  const std::size_t ny = s.ny();
  const bool has_rho = !s.r.empty();
  double total = 0.0;
  for (std::size_t i = 0; i < s.nx(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < ny; ++j) {
      const double D = d0 + s.g[i * ny + j] * tau - (has_rho ? s.r[i * ny + j] * sigma : 0.0);
      row += s.wy[j] * (1.0 / (D * phi1));
    }
    total += s.wx[i] * row;
  }
  return total;
}

}  // namespace dampedlab
