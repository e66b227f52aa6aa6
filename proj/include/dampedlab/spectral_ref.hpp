#pragma once

// Pseudo-spectral solver for the damped nonlocal system on the unit torus
//
//   gamma_t + u'.grad gamma = rho - gamma^2 - alpha gamma + I(t)
//   rho_t   + u'.grad rho   = -gamma rho
//   I(t) = 2 <gamma^2> - <rho>,   div u' = -gamma,   curl u' = 0
//
// with classical RK4 in time and 2/3-rule dealiasing. Lagrangian tracers
// carry (X, J) with dX/dt = u'(X), dJ/dt = -J gamma(X), using bicubic
// Hermite interpolation from spectrally differentiated fields.
//
// Grid: x_i = i/n, y_j = j/n, stored row-major as f[i*n + j].

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <fftw3.h>

#include "dampedlab/errors.hpp"
#include "dampedlab/fields.hpp"

namespace dampedlab {

using Field = std::vector<double>;
using Spectrum = std::vector<std::complex<double>>;

// Real 2D transform pair of size n x n; spectra are n x (n/2 + 1).
class Fft2 {
 public:
  explicit Fft2(int n) : n_(n), nh_(n / 2 + 1) {
    if (n < 4 || n % 2 != 0) throw InvalidParams("FFT grid size must be even and >= 4");
    real_ = fftw_alloc_real(std::size_t(n) * n);
    cplx_ = fftw_alloc_complex(std::size_t(n) * nh_);
    fwd_ = fftw_plan_dft_r2c_2d(n, n, real_, cplx_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_2d(n, n, cplx_, real_, FFTW_ESTIMATE);
  }
  Fft2(const Fft2&) = delete;
  Fft2& operator=(const Fft2&) = delete;
  ~Fft2() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(cplx_);
  }

  int n() const { return n_; }
  int nh() const { return nh_; }

  // Normalized so that inverse(forward(f)) = f.
  Spectrum forward(const Field& f) const {
    std::copy(f.begin(), f.end(), real_);
    fftw_execute(fwd_);
    Spectrum s(std::size_t(n_) * nh_);
    const double scale = 1.0 / (double(n_) * n_);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = {cplx_[k][0] * scale, cplx_[k][1] * scale};
    return s;
  }
  Field inverse(const Spectrum& s) const {
    for (std::size_t k = 0; k < s.size(); ++k) {
      cplx_[k][0] = s[k].real();
      cplx_[k][1] = s[k].imag();
    }
    fftw_execute(inv_);
    return Field(real_, real_ + std::size_t(n_) * n_);
  }

  // Signed wavenumbers of spectral entry (i, j).
  int kx(int i) const { return i <= n_ / 2 ? i : i - n_; }
  int ky(int j) const { return j; }

 private:
  int n_, nh_;
  double* real_;
  fftw_complex* cplx_;
  fftw_plan fwd_, inv_;
};

namespace detail {

inline double field_mean(const Field& f) {
  double s = 0.0;
  for (double v : f) s += v;
  return s / double(f.size());
}

inline double field_sup(const Field& f) {
  double s = 0.0;
  for (double v : f) s = std::max(s, std::abs(v));
  return s;
}

// d/dx^a d/dy^b in spectral space; Nyquist modes of odd derivatives dropped.
inline Spectrum derive(const Fft2& fft, const Spectrum& s, int a, int b) {
  const int n = fft.n(), nh = fft.nh();
  Spectrum out(s.size());
  const double tp = 2.0 * std::numbers::pi;
  for (int i = 0; i < n; ++i) {
    const int kx = fft.kx(i);
    for (int j = 0; j < nh; ++j) {
      const int ky = fft.ky(j);
      if ((a % 2 == 1 && 2 * std::abs(kx) == n) || (b % 2 == 1 && 2 * ky == n)) continue;
      std::complex<double> f = s[std::size_t(i) * nh + j];
      for (int q = 0; q < a; ++q) f *= std::complex<double>(0.0, tp * kx);
      for (int q = 0; q < b; ++q) f *= std::complex<double>(0.0, tp * ky);
      out[std::size_t(i) * nh + j] = f;
    }
  }
  return out;
}

inline void dealias(const Fft2& fft, Spectrum& s) {
  const int n = fft.n(), nh = fft.nh(), cut = n / 3;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < nh; ++j)
      if (std::abs(fft.kx(i)) > cut || fft.ky(j) > cut) s[std::size_t(i) * nh + j] = 0.0;
}

// Potential phi with Laplacian phi = -gamma (zero mean).
inline Spectrum potential(const Fft2& fft, const Spectrum& g) {
  const int n = fft.n(), nh = fft.nh();
  Spectrum phi(g.size());
  const double c = 4.0 * std::numbers::pi * std::numbers::pi;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < nh; ++j) {
      const double k2 = double(fft.kx(i)) * fft.kx(i) + double(fft.ky(j)) * fft.ky(j);
      if (k2 > 0) phi[std::size_t(i) * nh + j] = g[std::size_t(i) * nh + j] / (c * k2);
    }
  return phi;
}

}  // namespace detail

struct Velocity {
  Field u, v;
};

inline Velocity velocity_from_gamma(const Fft2& fft, const Field& gamma) {
  const double mean = detail::field_mean(gamma);
  if (std::abs(mean) > 1e-8) {
    throw NonZeroMean("velocity_from_gamma: mean(gamma) = " + std::to_string(mean));
  }
  const Spectrum phi = detail::potential(fft, fft.forward(gamma));
  return {fft.inverse(detail::derive(fft, phi, 1, 0)), fft.inverse(detail::derive(fft, phi, 0, 1))};
}

inline Velocity velocity_from_gamma(const Field& gamma, int n) {
  const Fft2 fft(n);
  return velocity_from_gamma(fft, gamma);
}

inline Field divergence(const Fft2& fft, const Velocity& w) {
  Field ux = fft.inverse(detail::derive(fft, fft.forward(w.u), 1, 0));
  const Field vy = fft.inverse(detail::derive(fft, fft.forward(w.v), 0, 1));
  for (std::size_t k = 0; k < ux.size(); ++k) ux[k] += vy[k];
  return ux;
}

// omega = v_x - u_y
inline Field vorticity(const Fft2& fft, const Velocity& w) {
  Field vx = fft.inverse(detail::derive(fft, fft.forward(w.v), 1, 0));
  const Field uy = fft.inverse(detail::derive(fft, fft.forward(w.u), 0, 1));
  for (std::size_t k = 0; k < vx.size(); ++k) vx[k] -= uy[k];
  return vx;
}

struct Tracer {
  Point2 a;  // label
  Point2 X;  // position
  double J = 1.0;
};

struct SpectralState {
  int n = 0;
  Field gamma, rho;
  double t = 0.0;
  std::vector<Tracer> tracers;
  double bkm_partial = 0.0;  // Int_0^t sup|gamma|
};

inline SpectralState make_spectral_state(const InitialData& d, int n,
                                         const std::vector<Point2>& tracer_labels) {
  SpectralState s;
  s.n = n;
  s.gamma.resize(std::size_t(n) * n);
  s.rho.resize(std::size_t(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = double(i) / n, y = double(j) / n;
      s.gamma[std::size_t(i) * n + j] = d.gamma0(x, y);
      s.rho[std::size_t(i) * n + j] = d.rho0(x, y);
    }
  // remove the grid mean left by the discrete sampling
  const double m = detail::field_mean(s.gamma);
  for (double& v : s.gamma) v -= m;
  for (const Point2& a : tracer_labels) s.tracers.push_back({a, a, 1.0});
  return s;
}

namespace detail {

// Values and x, y, xy derivatives on the grid, for bicubic Hermite lookup.
struct HermiteField {
  int n = 0;
  Field f, fx, fy, fxy;

  static HermiteField make(const Fft2& fft, const Spectrum& s) {
    HermiteField h;
    h.n = fft.n();
    h.f = fft.inverse(s);
    h.fx = fft.inverse(derive(fft, s, 1, 0));
    h.fy = fft.inverse(derive(fft, s, 0, 1));
    h.fxy = fft.inverse(derive(fft, s, 1, 1));
    return h;
  }

  double operator()(Point2 p) const {
    const double hx = 1.0 / n;
    double x = (p.x - std::floor(p.x)) * n, y = (p.y - std::floor(p.y)) * n;
    int i0 = int(std::floor(x)), j0 = int(std::floor(y));
    const double u = x - i0, v = y - j0;
    i0 %= n;
    j0 %= n;
    const int i1 = (i0 + 1) % n, j1 = (j0 + 1) % n;
    auto at = [&](const Field& g, int i, int j) { return g[std::size_t(i) * n + j]; };
    // cubic Hermite basis on [0, 1]
    auto h00 = [](double t) { return (1 + 2 * t) * (1 - t) * (1 - t); };
    auto h10 = [](double t) { return t * (1 - t) * (1 - t); };
    auto h01 = [](double t) { return t * t * (3 - 2 * t); };
    auto h11 = [](double t) { return t * t * (t - 1); };
    const double bu[4] = {h00(u), h01(u), hx * h10(u), hx * h11(u)};
    const double bv[4] = {h00(v), h01(v), hx * h10(v), hx * h11(v)};
    const int ii[2] = {i0, i1}, jj[2] = {j0, j1};
    double r = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const int i = ii[a], j = jj[b];
        r += bu[a] * bv[b] * at(f, i, j) + bu[a + 2] * bv[b] * at(fx, i, j) +
             bu[a] * bv[b + 2] * at(fy, i, j) + bu[a + 2] * bv[b + 2] * at(fxy, i, j);
      }
    return r;
  }
};

struct Rates {
  Field gamma, rho;
  std::vector<std::array<double, 3>> tracer;  // dX, dY, dJ
  double umax = 0.0;
};

inline Rates spectral_rates(const Fft2& fft, const Field& gamma, const Field& rho,
                            const std::vector<Tracer>& tr, double alpha) {
  const std::size_t N = gamma.size();
  Spectrum gs = fft.forward(gamma), rs = fft.forward(rho);
  dealias(fft, gs);
  dealias(fft, rs);
  const Spectrum phi = potential(fft, gs);
  const Spectrum us = derive(fft, phi, 1, 0), vs = derive(fft, phi, 0, 1);
  const Field g = fft.inverse(gs), r = fft.inverse(rs);
  const Field gx = fft.inverse(derive(fft, gs, 1, 0)), gy = fft.inverse(derive(fft, gs, 0, 1));
  const Field rx = fft.inverse(derive(fft, rs, 1, 0)), ry = fft.inverse(derive(fft, rs, 0, 1));
  const Field u = fft.inverse(us), v = fft.inverse(vs);

  double g2 = 0.0, rm = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    g2 += g[k] * g[k];
    rm += r[k];
  }
  const double I = 2.0 * g2 / double(N) - rm / double(N);

  Rates out;
  Field pg(N), pr(N);
  for (std::size_t k = 0; k < N; ++k) {
    pg[k] = -(u[k] * gx[k] + v[k] * gy[k]) - g[k] * g[k];
    pr[k] = -(u[k] * rx[k] + v[k] * ry[k]) - g[k] * r[k];
    out.umax = std::max(out.umax, std::hypot(u[k], v[k]));
  }
  Spectrum pgs = fft.forward(pg), prs = fft.forward(pr);
  dealias(fft, pgs);
  dealias(fft, prs);
  out.gamma = fft.inverse(pgs);
  out.rho = fft.inverse(prs);
  for (std::size_t k = 0; k < N; ++k) {
    out.gamma[k] += r[k] - alpha * g[k] + I;
  }
  if (!tr.empty()) {
    const HermiteField hu = HermiteField::make(fft, us), hv = HermiteField::make(fft, vs);
    const HermiteField hg = HermiteField::make(fft, gs);
    for (const Tracer& t : tr) out.tracer.push_back({hu(t.X), hv(t.X), -t.J * hg(t.X)});
  }
  return out;
}

inline void check_finite(const Field& f, const char* name) {
  for (double v : f)
    if (!std::isfinite(v)) throw NonFinite(std::string("non-finite value in ") + name);
}

}  // namespace detail

// One RK4 step. dt must satisfy dt <= 0.5 h / max|u'| at the start.
inline SpectralState step(const Fft2& fft, const SpectralState& s, double alpha, double dt) {
  using detail::Rates;
  const std::size_t N = s.gamma.size();
  const double h = 1.0 / s.n;
  auto advance = [&](const SpectralState& base, const Rates& k, double c) {
    SpectralState o = base;
    for (std::size_t q = 0; q < N; ++q) {
      o.gamma[q] += c * k.gamma[q];
      o.rho[q] += c * k.rho[q];
    }
    for (std::size_t q = 0; q < o.tracers.size(); ++q) {
      o.tracers[q].X.x += c * k.tracer[q][0];
      o.tracers[q].X.y += c * k.tracer[q][1];
      o.tracers[q].J += c * k.tracer[q][2];
    }
    return o;
  };
  const Rates k1 = detail::spectral_rates(fft, s.gamma, s.rho, s.tracers, alpha);
  if (dt > 0.5 * h / std::max(k1.umax, 1e-300)) {
    throw CflViolation("dt = " + std::to_string(dt) + " exceeds 0.5 h / |u'|max = " +
                       std::to_string(0.5 * h / k1.umax));
  }
  const SpectralState s2 = advance(s, k1, 0.5 * dt);
  const Rates k2 = detail::spectral_rates(fft, s2.gamma, s2.rho, s2.tracers, alpha);
  const SpectralState s3 = advance(s, k2, 0.5 * dt);
  const Rates k3 = detail::spectral_rates(fft, s3.gamma, s3.rho, s3.tracers, alpha);
  const SpectralState s4 = advance(s, k3, dt);
  const Rates k4 = detail::spectral_rates(fft, s4.gamma, s4.rho, s4.tracers, alpha);

  SpectralState o = s;
  for (std::size_t q = 0; q < N; ++q) {
    o.gamma[q] += dt / 6.0 * (k1.gamma[q] + 2 * k2.gamma[q] + 2 * k3.gamma[q] + k4.gamma[q]);
    o.rho[q] += dt / 6.0 * (k1.rho[q] + 2 * k2.rho[q] + 2 * k3.rho[q] + k4.rho[q]);
  }
  for (std::size_t q = 0; q < o.tracers.size(); ++q) {
    Tracer& t = o.tracers[q];
    for (int c = 0; c < 3; ++c) {
      const double inc = dt / 6.0 *
                         (k1.tracer[q][c] + 2 * k2.tracer[q][c] + 2 * k3.tracer[q][c] +
                          k4.tracer[q][c]);
      if (c == 0) t.X.x += inc;
      if (c == 1) t.X.y += inc;
      if (c == 2) t.J += inc;
    }
    t.X.x -= std::floor(t.X.x);
    t.X.y -= std::floor(t.X.y);
  }
  detail::check_finite(o.gamma, "gamma");
  detail::check_finite(o.rho, "rho");
  o.t = s.t + dt;
  o.bkm_partial = s.bkm_partial + 0.5 * dt * (detail::field_sup(s.gamma) + detail::field_sup(o.gamma));
  return o;
}

inline SpectralState step(const SpectralState& s, double alpha, double dt) {
  const Fft2 fft(s.n);
  return step(fft, s, alpha, dt);
}

struct SpectralDiagnostics {
  double I = 0, mean_gamma = 0, sup_gamma = 0, min_gamma = 0, bkm_partial = 0;
};

inline SpectralDiagnostics diagnostics(const SpectralState& s) {
  SpectralDiagnostics d;
  double g2 = 0.0;
  for (double v : s.gamma) g2 += v * v;
  d.I = 2.0 * g2 / double(s.gamma.size()) - detail::field_mean(s.rho);
  d.mean_gamma = detail::field_mean(s.gamma);
  d.sup_gamma = *std::max_element(s.gamma.begin(), s.gamma.end());
  d.min_gamma = *std::min_element(s.gamma.begin(), s.gamma.end());
  d.bkm_partial = s.bkm_partial;
  return d;
}

// Tracer values interpolated from the fields (bicubic Hermite).
struct TracerSample {
  Point2 a, X;
  double J, gamma, rho;
};

inline std::vector<TracerSample> sample_tracers(const Fft2& fft, const SpectralState& s) {
  const detail::HermiteField hg = detail::HermiteField::make(fft, fft.forward(s.gamma));
  const detail::HermiteField hr = detail::HermiteField::make(fft, fft.forward(s.rho));
  std::vector<TracerSample> out;
  for (const Tracer& t : s.tracers) out.push_back({t.a, t.X, t.J, hg(t.X), hr(t.X)});
  return out;
}

struct SpectralOptions {
  double cfl = 0.4;        // dt = cfl h / max|u'|, capped by dt_max
  double dt_max = 1e-2;
  double growth_stop = 50.0;  // halt once sup|gamma| exceeds this multiple of its start
};

struct SpectralRecord {
  double t;
  SpectralDiagnostics diag;
  double omega_sup;
  std::vector<TracerSample> tracers;
};

struct SpectralRun {
  int n = 0;
  double alpha = 0.0;
  std::vector<SpectralRecord> records;  // one per requested probe time reached
  double worst_mean = 0.0;              // max |mean gamma| over all steps
  double worst_omega = 0.0;             // max |omega| over all probes
  bool halted = false;
  std::string halt_reason;
};

// Integrates to each probe time in turn (probe times increasing).
inline SpectralRun run_spectral(const InitialData& d, double alpha, int n,
                                const std::vector<double>& probe_times,
                                const std::vector<Point2>& tracer_labels,
                                SpectralOptions o = {}) {
  const Fft2 fft(n);
  SpectralState s = make_spectral_state(d, n, tracer_labels);
  const double sup0 = detail::field_sup(s.gamma);
  SpectralRun run;
  run.n = n;
  run.alpha = alpha;
  auto record = [&]() {
    SpectralRecord r;
    r.t = s.t;
    r.diag = diagnostics(s);
    const Velocity w = velocity_from_gamma(fft, s.gamma);
    r.omega_sup = detail::field_sup(vorticity(fft, w));
    r.tracers = sample_tracers(fft, s);
    run.worst_omega = std::max(run.worst_omega, r.omega_sup);
    run.records.push_back(std::move(r));
  };
  const double h = 1.0 / n;
  for (double tp : probe_times) {
    try {
      while (s.t < tp) {
        const Velocity w = velocity_from_gamma(fft, s.gamma);
        const double umax = std::max(detail::field_sup(w.u), detail::field_sup(w.v)) * std::sqrt(2.0);
        double dt = std::min(o.dt_max, o.cfl * h / std::max(umax, 1e-12));
        const int steps_left = int(std::ceil((tp - s.t) / dt - 1e-9));
        dt = (tp - s.t) / std::max(steps_left, 1);
        s = step(fft, s, alpha, dt);
        if (steps_left == 1) s.t = tp;
        run.worst_mean = std::max(run.worst_mean, std::abs(detail::field_mean(s.gamma)));
        if (detail::field_sup(s.gamma) > o.growth_stop * sup0) {
          run.halted = true;
          run.halt_reason = "sup|gamma| grew past " + std::to_string(o.growth_stop) + "x";
          return run;
        }
      }
    } catch (const NonFinite& e) {
      run.halted = true;
      run.halt_reason = e.what();
      return run;
    }
    record();
  }
  return run;
}

}  // namespace dampedlab
