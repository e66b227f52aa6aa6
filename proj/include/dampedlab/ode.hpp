#pragma once

// Dormand-Prince 5(4) with PI step control, continuous extension of order 4
// and sign-change events. Blowup of the state is detected as a collapse of
// the step size: rhs evaluations that throw IntegrandBlowup (or return
// non-finite values) reject the step and halve it, so the last accepted time
// and the first failing time bracket the singularity.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dampedlab/errors.hpp"

namespace dampedlab {

using State = std::vector<double>;

struct OdeProblem {
  using Rhs = std::function<void(double t, const State& y, State& dy)>;
  using Event = std::function<double(double t, const State& y)>;

  std::size_t dim = 1;
  Rhs rhs;
  double t0 = 0.0;
  State y0;
  std::vector<Event> events;
};

struct OdeTolerances {
  double rel = 1e-10;
  double abs = 1e-12;
  double event_tol = 1e-6;
  double h0 = 0.0;           // initial step, 0 = automatic
  double h_max = INFINITY;
  long max_rejections = 1000000;
};

enum class Terminal { ReachedEnd, EventHit, BlowupBracketed };

struct TerminalStatus {
  Terminal kind = Terminal::ReachedEnd;
  int event_index = -1;
  double t_event = NAN;
  double t_lo = NAN;  // blowup bracket
  double t_hi = NAN;
};

class OdeSolution {
 public:
  struct Node {
    double t;
    State y;
  };

  const std::vector<Node>& nodes() const { return nodes_; }
  const TerminalStatus& status() const { return status_; }
  double t_begin() const { return nodes_.front().t; }
  double t_end() const { return nodes_.back().t; }
  const State& back() const { return nodes_.back().y; }
  const std::vector<OdeProblem::Event>& events() const { return events_; }
  double event_tol() const { return event_tol_; }

  // Dense output on [t_begin, t_end].
  State operator()(double t) const {
    if (nodes_.size() == 1 || t <= nodes_.front().t) return nodes_.front().y;
    if (t >= nodes_.back().t) return nodes_.back().y;
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t,
                               [](double v, const Node& n) { return v < n.t; });
    const std::size_t k = std::size_t(it - nodes_.begin()) - 1;
    const Segment& s = segs_[k];
    const double h = nodes_[k + 1].t - nodes_[k].t;
    const double th = (t - nodes_[k].t) / h;
    const double th1 = 1.0 - th;
    State y(s.r1.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = s.r1[i] + th * (s.r2[i] + th1 * (s.r3[i] + th * (s.r4[i] + th1 * s.r5[i])));
    }
    return y;
  }

 private:
  friend OdeSolution integrate(const OdeProblem&, double, const OdeTolerances&,
                               const std::function<void(double, const State&)>&);
  struct Segment {
    State r1, r2, r3, r4, r5;
  };
  std::vector<Node> nodes_;
  std::vector<Segment> segs_;  // segs_[k] covers [nodes_[k].t, nodes_[k+1].t]
  TerminalStatus status_;
  std::vector<OdeProblem::Event> events_;
  double event_tol_ = 1e-6;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DP54 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                          d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                          d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
};

inline bool all_finite(const State& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace detail

// on_accept(t, y) is called after every accepted step (and once at t0).
inline OdeSolution integrate(const OdeProblem& prob, double t_end, const OdeTolerances& tol,
                             const std::function<void(double, const State&)>& on_accept = {}) {
  using C = detail::DP54;
  if (!(t_end > prob.t0)) throw InvalidParams("integrate: t_end must exceed t0");
  if (!(tol.rel > 0 && tol.abs > 0)) throw InvalidParams("integrate: tolerances must be positive");
  if (prob.dim < 1 || prob.y0.size() != prob.dim) {
    throw InvalidParams("integrate: y0 must have length dim >= 1");
  }
  const std::size_t n = prob.dim;

  OdeSolution sol;
  sol.events_ = prob.events;
  sol.event_tol_ = tol.event_tol;
  double t = prob.t0;
  State y = prob.y0;
  sol.nodes_.push_back({t, y});
  if (on_accept) on_accept(t, y);

  State k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n);
  prob.rhs(t, y, k1);
  if (!detail::all_finite(k1)) throw IntegrandBlowup("rhs is not finite at the initial state");

  auto err_norm = [&](const State& yn, double h) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = tol.abs + tol.rel * std::max(std::abs(y[i]), std::abs(yn[i]));
      const double d = h * (C::e1 * k1[i] + C::e3 * k3[i] + C::e4 * k4[i] + C::e5 * k5[i] +
                        C::e6 * k6[i] + C::e7 * k7[i]) /
                       e;
      s += d * d;
    }
    return std::sqrt(s / double(n));
  };

  double h = tol.h0;
  if (!(h > 0.0)) {
    // Hairer's starting-step heuristic, first-order version.
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = tol.abs + tol.rel * std::abs(y[i]);
      d0 += (y[i] / sc) * (y[i] / sc);
      d1 += (k1[i] / sc) * (k1[i] / sc);
    }
    d0 = std::sqrt(d0 / double(n));
    d1 = std::sqrt(d1 / double(n));
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  }
  h = std::min({h, tol.h_max, t_end - t});

  std::vector<double> g_prev(prob.events.size());
  for (std::size_t e = 0; e < prob.events.size(); ++e) g_prev[e] = prob.events[e](t, y);

  constexpr double beta = 0.04, expo = 0.2 - beta * 0.75, safe = 0.9;
  constexpr double fac_min = 0.2, fac_max = 10.0;
  double err_old = 1e-4;
  long rejections = 0;
  bool last_rejected = false;

  for (;;) {
    const double h_floor = 1e-14 * std::max(1.0, std::abs(t));
    if (h < h_floor) {
      sol.status_.kind = Terminal::BlowupBracketed;
      sol.status_.t_lo = t;
      sol.status_.t_hi = t + 2.0 * h;  // last failing trial used twice this step
      return sol;
    }
    bool failed = false;
    try {
      for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * C::a21 * k1[i];
      prob.rhs(t + C::c2 * h, ytmp, k2);
      for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (C::a31 * k1[i] + C::a32 * k2[i]);
      prob.rhs(t + C::c3 * h, ytmp, k3);
      for (std::size_t i = 0; i < n; ++i)
        ytmp[i] = y[i] + h * (C::a41 * k1[i] + C::a42 * k2[i] + C::a43 * k3[i]);
      prob.rhs(t + C::c4 * h, ytmp, k4);
      for (std::size_t i = 0; i < n; ++i)
        ytmp[i] = y[i] + h * (C::a51 * k1[i] + C::a52 * k2[i] + C::a53 * k3[i] + C::a54 * k4[i]);
      prob.rhs(t + C::c5 * h, ytmp, k5);
      for (std::size_t i = 0; i < n; ++i)
        ytmp[i] = y[i] + h * (C::a61 * k1[i] + C::a62 * k2[i] + C::a63 * k3[i] + C::a64 * k4[i] +
                              C::a65 * k5[i]);
      prob.rhs(t + h, ytmp, k6);
      for (std::size_t i = 0; i < n; ++i)
        ynew[i] = y[i] + h * (C::a71 * k1[i] + C::a73 * k3[i] + C::a74 * k4[i] + C::a75 * k5[i] +
                              C::a76 * k6[i]);
      prob.rhs(t + h, ynew, k7);
      failed = !(detail::all_finite(k2) && detail::all_finite(k3) && detail::all_finite(k4) &&
                 detail::all_finite(k5) && detail::all_finite(k6) && detail::all_finite(k7) &&
                 detail::all_finite(ynew));
    } catch (const IntegrandBlowup&) {
      failed = true;
    }

    double err = failed ? INFINITY : err_norm(ynew, h);
    if (failed || !(err <= 1.0)) {
      if (++rejections >= tol.max_rejections) {
        throw StiffnessStall("no progress after " + std::to_string(rejections) +
                             " consecutive rejections at t = " + std::to_string(t));
      }
      if (failed) {
        h *= 0.5;
      } else {
        h *= std::max(fac_min, safe / std::pow(err, 0.2));
      }
      last_rejected = true;
      continue;
    }

    // accepted
    rejections = 0;
    OdeSolution::Segment seg;
    seg.r1 = y;
    seg.r2.resize(n);
    seg.r3.resize(n);
    seg.r4.resize(n);
    seg.r5.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double dy = ynew[i] - y[i];
      const double bspl = h * k1[i] - dy;
      seg.r2[i] = dy;
      seg.r3[i] = bspl;
      seg.r4[i] = dy - h * k7[i] - bspl;
      seg.r5[i] = h * (C::d1 * k1[i] + C::d3 * k3[i] + C::d4 * k4[i] + C::d5 * k5[i] +
                       C::d6 * k6[i] + C::d7 * k7[i]);
    }
    const double t_new = (t_end - (t + h) < 1e-15 * std::abs(t_end)) ? t_end : t + h;
    sol.nodes_.push_back({t_new, ynew});
    sol.segs_.push_back(std::move(seg));
    y = ynew;
    k1 = k7;
    t = t_new;
    if (on_accept) on_accept(t, y);

    for (std::size_t e = 0; e < prob.events.size(); ++e) {
      const double g = prob.events[e](t, y);
      if ((g_prev[e] < 0.0) != (g < 0.0) || g == 0.0) {
        sol.status_.kind = Terminal::EventHit;
        sol.status_.event_index = int(e);
        // bisection on the dense output of the last segment
        double lo = sol.nodes_[sol.nodes_.size() - 2].t, hi = t;
        const double g_lo = g_prev[e];
        while (hi - lo > tol.event_tol * 1e-3) {
          const double mid = 0.5 * (lo + hi);
          const double gm = prob.events[e](mid, sol(mid));
          if ((gm < 0.0) == (g_lo < 0.0) && gm != 0.0) lo = mid;
          else hi = mid;
        }
        sol.status_.t_event = 0.5 * (lo + hi);
        return sol;
      }
      g_prev[e] = g;
    }
    if (t >= t_end) {
      sol.status_.kind = Terminal::ReachedEnd;
      return sol;
    }

    double fac = err > 0.0 ? std::pow(err, expo) / std::pow(err_old, beta) / safe : 1.0 / fac_max;
    fac = std::clamp(fac, 1.0 / fac_max, 1.0 / fac_min);
    double h_new = h / fac;
    if (last_rejected) h_new = std::min(h_new, h);
    err_old = std::max(err, 1e-4);
    last_rejected = false;
    h = std::min({h_new, tol.h_max, t_end - t});
  }
}

// Time at which event `index` changes sign, found by bisection on the dense
// output to the solution's event tolerance.
inline double locate_event(const OdeSolution& sol, std::size_t index) {
  if (index >= sol.events().size()) throw InvalidParams("locate_event: no such event");
  const auto& g = sol.events()[index];
  const auto& nodes = sol.nodes();
  double g_prev = g(nodes[0].t, nodes[0].y);
  if (g_prev == 0.0) return nodes[0].t;
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    const double gk = g(nodes[k].t, nodes[k].y);
    if ((gk < 0.0) != (g_prev < 0.0) || gk == 0.0) {
      double lo = nodes[k - 1].t, hi = nodes[k].t;
      while (hi - lo > sol.event_tol()) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid, sol(mid));
        if ((gm < 0.0) == (g_prev < 0.0) && gm != 0.0) lo = mid;
        else hi = mid;
      }
      return 0.5 * (lo + hi);
    }
    g_prev = gk;
  }
  throw NoSignChange("event " + std::to_string(index) + " does not change sign on [" +
                     std::to_string(sol.t_begin()) + ", " + std::to_string(sol.t_end()) + "]");
}

}  // namespace dampedlab
