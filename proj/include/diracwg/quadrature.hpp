#pragma once
// One-dimensional quadrature for the momentum integrals: composite trapezoid
// rules on straight segments and circular arcs in the complex momentum plane,
// a detour contour that avoids two real singular momenta, and a symmetric
// principal-value rule with excision-radius extrapolation.
//
// All rules are node lists (point, complex weight), so an integral is a plain
// weighted sum and caller-side node doubling reuses cached evaluations.

#include <algorithm>
#include <array>
#include <type_traits>
#include <utility>
#include <vector>

#include "diracwg/common.hpp"

namespace diracwg {

struct QuadNode {
  cplx p;  ///< evaluation point
  cplx w;  ///< weight, including the path derivative
};

namespace detail {
/// Composite Simpson coefficient at node k of n (n even): 1, 4, 2, ..., 4, 1
/// over 3.  Uniform nodes, so halving the panel width reuses every value.
inline double simpson_c(int k, int n) {
  if (k == 0 || k == n) return 1.0 / 3.0;
  return (k % 2 ? 4.0 : 2.0) / 3.0;
}
inline int even_up(int n) { return n < 2 ? 2 : n + (n % 2); }
}  // namespace detail

/// Composite Simpson on the straight segment [a, b] with n panels.
inline void append_segment(std::vector<QuadNode>& out, cplx a, cplx b, int n) {
  n = detail::even_up(n);
  const cplx dz = (b - a) / double(n);
  for (int k = 0; k <= n; ++k)
    out.push_back({a + double(k) * dz, detail::simpson_c(k, n) * dz});
}

/// Composite Simpson on the arc c + r e^{i theta}, theta from th0 to th1.
inline void append_arc(std::vector<QuadNode>& out, cplx c, double r, double th0, double th1,
                       int n) {
  n = detail::even_up(n);
  const double dt = (th1 - th0) / n;
  for (int k = 0; k <= n; ++k) {
    const cplx e = std::polar(r, th0 + k * dt);
    out.push_back({c + e, detail::simpson_c(k, n) * dt * cplx(0, 1) * e});
  }
}

template <class F>
auto quad_sum(const std::vector<QuadNode>& nodes, F&& f) {
  using V = std::decay_t<decltype(f(nodes[0].p))>;
  V acc = V(nodes[0].w * f(nodes[0].p));
  for (size_t k = 1; k < nodes.size(); ++k) acc += V(nodes[k].w * f(nodes[k].p));
  return acc;
}

/// Path from -pi to pi along the real axis that detours around -+q with
/// semicircles: above the axis at -q, below the axis at +q.
struct DetourSpec {
  double q = 0;            ///< avoided momentum pair -+q, 0 < q - r, q + r < pi
  double radius = 0;       ///< semicircle radius
  int nodes_per_pi = 64;   ///< panels per unit pi of parameter length
};

inline std::vector<QuadNode> detour_contour(const DetourSpec& s) {
  if (!(s.radius > 0) || !(s.q - s.radius > 0) || !(s.q + s.radius < PI))
    throw SolverError("detour_contour: arcs must stay inside (0, pi)");
  const auto panels = [&](double len) {
    return std::max(4, int(std::ceil(len * s.nodes_per_pi / PI)));
  };
  std::vector<QuadNode> out;
  append_segment(out, -PI, -s.q - s.radius, panels(PI - s.q - s.radius));
  append_arc(out, -s.q, s.radius, PI, 0.0, std::max(4, s.nodes_per_pi));  // upper
  append_segment(out, -s.q + s.radius, s.q - s.radius, panels(2 * (s.q - s.radius)));
  append_arc(out, s.q, s.radius, -PI, 0.0, std::max(4, s.nodes_per_pi));  // lower
  append_segment(out, s.q + s.radius, PI, panels(PI - s.q - s.radius));
  return out;
}

/// Principal-value rule on [a, b] with simple singularities at `centers`:
/// each center is excised symmetrically at radii tau, tau/2, tau/4, with
/// logarithmically graded nodes toward the excision.  The three excised
/// integrals E0, E1, E2 extrapolate to the principal value through the
/// error model E(tau) = I + c1 tau + c3 tau^3 of the symmetric excision.
struct PvRule {
  std::array<std::vector<QuadNode>, 3> nodes;

  template <class V>
  static V extrapolate(const V& e0, const V& e1, const V& e2) {
    return (1.0 / 7.0) * e0 - (10.0 / 7.0) * e1 + (16.0 / 7.0) * e2;
  }
  template <class F>
  auto integrate(F&& f) const {
    return extrapolate(quad_sum(nodes[0], f), quad_sum(nodes[1], f), quad_sum(nodes[2], f));
  }
};

namespace detail {
/// Nodes on [c+tau, c+R] (side=+1) or [c-R, c-tau] (side=-1), graded toward c
/// through the substitution p = c + side * e^u.
inline void append_graded(std::vector<QuadNode>& out, double c, int side, double tau, double R,
                          int n) {
  n = even_up(n);
  const double u0 = std::log(tau), u1 = std::log(R);
  const double du = (u1 - u0) / n;
  for (int k = 0; k <= n; ++k) {
    const double e = std::exp(u0 + k * du);
    // both sides traverse left-to-right after substitution: weight is +e^u du
    out.push_back({cplx(c + side * e, 0), cplx(simpson_c(k, n) * du * e, 0)});
  }
}
}  // namespace detail

/// Cover [a, b] containing the regular-but-peaked point c: plain Simpson far
/// away, logarithmically graded nodes toward c down to `inner`, and a fine
/// uniform patch across [c - inner, c + inner].  No excision: the integrand
/// must be finite at c (sharp peak of width ~inner, e.g. a near-pole whose
/// pole sits just off the axis).
inline void append_peak_refined(std::vector<QuadNode>& out, double a, double b, double c,
                                double inner, int nodes_per_pi) {
  if (!(c > a && c < b)) throw SolverError("peak refinement point outside the segment");
  const double R = std::min(c - a, b - c) / 2;
  if (!(inner > 0) || inner >= R / 2) throw SolverError("peak refinement scale too coarse");
  const auto panels = [&](double len) {
    return std::max(4, int(std::ceil(len * nodes_per_pi / PI)));
  };
  append_segment(out, a, c - R, panels(c - R - a));
  detail::append_graded(out, c, -1, inner, R, std::max(8, nodes_per_pi));
  append_segment(out, c - inner, c + inner, 8);
  detail::append_graded(out, c, +1, inner, R, std::max(8, nodes_per_pi));
  append_segment(out, c + R, b, panels(b - c - R));
}

/// Build the principal-value rule.  `centers` must be strictly inside (a, b),
/// ascending, and separated by more than 4 tau.  Each `refine` entry
/// (point, inner scale) marks a regular sharp peak away from the centers that
/// every excision level resolves with graded nodes (shared across levels).
inline PvRule pv_rule(double a, double b, std::vector<double> centers, double tau,
                      int nodes_per_pi,
                      const std::vector<std::pair<double, double>>& refine = {}) {
  if (centers.empty()) throw SolverError("pv_rule: need at least one center");
  for (size_t i = 0; i < centers.size(); ++i) {
    if (!(centers[i] > a + 2 * tau) || !(centers[i] < b - 2 * tau))
      throw SolverError("pv_rule: center too close to an endpoint");
    if (i && !(centers[i] - centers[i - 1] > 4 * tau))
      throw SolverError("pv_rule: centers closer than the excision ladder");
  }
  PvRule rule;
  for (int lev = 0; lev < 3; ++lev) {
    const double t = tau / double(1 << lev);
    std::vector<QuadNode>& out = rule.nodes[lev];
    // graded radius per center: half the distance to the nearest neighbor,
    // full distance to an endpoint
    std::vector<double> R(centers.size());
    for (size_t i = 0; i < centers.size(); ++i) {
      double r = std::min(centers[i] - a, b - centers[i]);
      if (i) r = std::min(r, (centers[i] - centers[i - 1]) / 2);
      if (i + 1 < centers.size()) r = std::min(r, (centers[i + 1] - centers[i]) / 2);
      R[i] = r;
    }
    const auto panels = [&](double len) {
      return std::max(4, int(std::ceil(len * nodes_per_pi / PI)));
    };
    // Plain stretches between graded regions, routed through peak refinement
    // wherever a refine point falls inside.
    const auto emit_plain = [&](double x0, double x1) {
      if (!(x1 > x0 + 1e-14)) return;
      std::vector<std::pair<double, double>> inside;
      for (const auto& rf : refine)
        if (rf.first > x0 + 1e-12 && rf.first < x1 - 1e-12) inside.push_back(rf);
      std::sort(inside.begin(), inside.end());
      double cur = x0;
      for (size_t j = 0; j < inside.size(); ++j) {
        const double bound =
            (j + 1 < inside.size()) ? 0.5 * (inside[j].first + inside[j + 1].first) : x1;
        append_peak_refined(out, cur, bound, inside[j].first, inside[j].second, nodes_per_pi);
        cur = bound;
      }
      if (inside.empty()) append_segment(out, x0, x1, panels(x1 - x0));
    };
    double cursor = a;
    for (size_t i = 0; i < centers.size(); ++i) {
      const double left = centers[i] - R[i];
      emit_plain(cursor, left);
      detail::append_graded(out, centers[i], -1, t, R[i], std::max(8, nodes_per_pi));
      detail::append_graded(out, centers[i], +1, t, R[i], std::max(8, nodes_per_pi));
      cursor = centers[i] + R[i];
    }
    emit_plain(cursor, b);
  }
  return rule;
}

}  // namespace diracwg
