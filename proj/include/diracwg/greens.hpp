#pragma once
// Analytic continuation of the interface-line band kernel.
//
// The half-space kernel at frequency lambda is assembled as a momentum
// integral over a detour contour: three real segments joined by two
// semicircular arcs that straddle the fold momenta -q and +q of the tracked
// band (upper half-plane at -q, lower at +q).  On the real segments every
// discrete band contributes through its trace-restricted dyad; on the arcs
// only the tracked band is continued, by shift-inverted iteration walked
// node to node.  The remainder sum (all bands except the tracked one) is
// integrated over the full period, so the gaps under the arcs carry
// remainder-only nodes.
//
// Also provided: Newton search for the complex momentum roots of the tracked
// band at a given frequency, the residue identity linking the detour to a
// principal-value integral plus half-residue dyads, and a radiation split
// that separates the propagating amplitude from the evanescent tail.
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstring>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "diracwg/band.hpp"
#include "diracwg/common.hpp"
#include "diracwg/forms.hpp"
#include "diracwg/mesh.hpp"
#include "diracwg/pencil.hpp"
#include "diracwg/quadrature.hpp"
#include "diracwg/trace.hpp"

namespace diracwg {

/// Image of a dof vector under the cell mirror x1 -> 1 - x1.
inline Eigen::VectorXcd apply_mirror(const Mesh& mesh, const Eigen::VectorXcd& v) {
  Eigen::VectorXcd out(v.size());
  for (int d = 0; d < int(v.size()); ++d) out[mesh.mirror_dof[d]] = v[d];
  return out;
}

/// Plain bilinear product a^T b (no conjugation).
inline cplx bilinear(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  return a.cwiseProduct(b).sum();
}

/// One eigenpair of the Bloch pencil at (possibly complex) momentum p,
/// targeted near `shift`, with the left vector obtained from the mirror
/// relation A(-p) = P A(p) P: w = P v / ((P v)^T M v), so that w^T M v = 1.
struct BranchSample {
  cplx p;
  cplx lambda;
  cplx slope;             ///< d lambda / d p
  Eigen::VectorXcd v, w;  ///< right vector and normalized left vector
  double residual;        ///< ||(A - lambda M) v|| / (||A||_1 ||v||)
};

/// Shift-inverted iteration with Rayleigh refinement rounds.  `start` seeds
/// the iteration (pass the neighbouring node's vector when walking a
/// contour); an empty start falls back to a deterministic dense seed.
inline BranchSample sample_branch(const AssembledForms& F, const Eigen::MatrixXcd& Mc,
                                  cplx p, cplx shift, const Eigen::VectorXcd& start) {
  const int n = int(Mc.rows());
  const Eigen::MatrixXcd A = F.bloch_A(p);
  const double scale_a = A.cwiseAbs().colwise().sum().maxCoeff();
  const Mesh& mesh = *F.mesh;
  Eigen::VectorXcd v = start.size() == n ? start : Eigen::VectorXcd::Ones(n).eval();
  v /= v.norm();
  auto rayleigh = [&](const Eigen::VectorXcd& x) -> cplx {
    const Eigen::VectorXcd px = apply_mirror(mesh, x);
    const cplx den = bilinear(px, Mc * x);
    if (std::abs(den) < 1e-300) throw SolverError("degenerate bilinear normalization in branch sample");
    return bilinear(px, A * x) / den;
  };
  {
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A - shift * Mc);
    for (int it = 0; it < 3; ++it) {
      v = lu.solve(Mc * v);
      v /= v.norm();
    }
  }
  cplx lam = rayleigh(v);
  double res = (A * v - lam * (Mc * v)).norm() / (scale_a * v.norm());
  for (int round = 0; round < 3 && res > 1e-13; ++round) {
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A - lam * Mc);
    for (int it = 0; it < 2; ++it) {
      v = lu.solve(Mc * v);
      v /= v.norm();
      lam = rayleigh(v);
    }
    res = (A * v - lam * (Mc * v)).norm() / (scale_a * v.norm());
  }
  BranchSample out;
  out.p = p;
  out.lambda = lam;
  out.v = v;
  out.residual = res;
  const Eigen::VectorXcd pv = apply_mirror(mesh, v);
  const cplx s = bilinear(pv, Mc * v);
  if (std::abs(s) < 1e-12) throw SolverError("bilinear norm collapsed on the continued branch");
  out.w = pv / s;
  out.slope = bilinear(out.w, F.bloch_A_prime(p) * v);
  return out;
}

/// Complex momentum roots of the tracked band at a fixed frequency:
/// lambda_band(q_plus) = lambda with q_plus near the fold +q, and
/// q_minus := -q_plus enforced through the mirror symmetry of the pencil.
struct ComplexMomentumRoot {
  cplx lambda;
  cplx q_plus, q_minus;
  std::vector<double> newton_residuals;  ///< |lambda_band(p_k) - lambda| / scale per iteration
  double branch_certificate = 0;         ///< eigen-residual of the final pair
  double mirror_residual = 0;            ///< |lambda_band(-q_plus) - lambda| / scale
  cplx slope_plus;                       ///< d lambda / d p at q_plus
  Eigen::VectorXcd v_plus, w_plus;       ///< eigenpair at q_plus (w^T M v = 1)
};

/// Newton iteration on the continued band nearest `lambda`, starting the
/// momentum search at p_start.  Returns the converged sample (s.p is the
/// root); throws when the iteration stalls.
inline BranchSample newton_branch_root(const AssembledForms& F, const Eigen::MatrixXcd& Mc,
                                       cplx lambda, cplx p_start, int max_iter = 30) {
  const double scale = std::max(1.0, std::abs(lambda));
  cplx p = p_start;
  Eigen::VectorXcd seed;
  BranchSample s;
  for (int it = 0; it < max_iter; ++it) {
    s = sample_branch(F, Mc, p, lambda, seed);
    seed = s.v;
    if (std::abs(s.lambda - lambda) / scale <= 1e-13) return s;
    if (std::abs(s.slope) < 1e-12) throw SolverError("vanishing band slope in momentum root search");
    p -= (s.lambda - lambda) / s.slope;
  }
  if (std::abs(s.lambda - lambda) / scale > 1e-10)
    throw SolverError("momentum root iteration did not converge");
  return s;
}

inline ComplexMomentumRoot find_complex_roots(const AssembledForms& F, double eps,
                                              const DiracPoint& dp, cplx lambda,
                                              int max_iter = 30) {
  const Eigen::MatrixXcd Mc = F.mass(eps).cast<cplx>();
  const double scale = std::max(1.0, std::abs(lambda));
  ComplexMomentumRoot out;
  out.lambda = lambda;
  cplx p = dp.q_star;
  Eigen::VectorXcd seed;
  BranchSample s;
  for (int it = 0; it < max_iter; ++it) {
    s = sample_branch(F, Mc, p, lambda, seed);
    seed = s.v;
    const double defect = std::abs(s.lambda - lambda) / scale;
    out.newton_residuals.push_back(defect);
    if (defect <= 1e-13) break;
    if (std::abs(s.slope) < 1e-12) throw SolverError("vanishing band slope in momentum root search");
    p -= (s.lambda - lambda) / s.slope;
  }
  out.q_plus = p;
  out.q_minus = -p;
  out.slope_plus = s.slope;
  out.v_plus = s.v;
  out.w_plus = s.w;
  out.branch_certificate = s.residual;
  const BranchSample sm = sample_branch(F, Mc, -p, lambda, apply_mirror(*F.mesh, s.v));
  out.mirror_residual = std::abs(sm.lambda - lambda) / scale;
  return out;
}

/// Contour geometry of the detoured momentum integral.
struct DetourParams {
  double radius = 0.1;    ///< arc radius around each fold momentum
  int nodes_per_pi = 64;  ///< quadrature density
  bool reflect = false;   ///< swap arc half-planes (for the conjugate-frequency contour)
};

/// Assembled, frequency-resolved interface-line kernel of one half structure.
/// kernel(lambda, k) is the nt x nt matrix of the kernel between the
/// interface line and its copy shifted k cells to the right.
struct ContinuedOperator {
  int nt = 0;
  int lo = 0;               ///< tracked band position in the ascending real spectrum
  double eps = 0;
  double lambda_ref = 0;    ///< crossing frequency the arcs are anchored to
  double q_detour = 0;      ///< fold momentum straddled by the arcs
  DetourParams params;
  Eigen::VectorXd trace_w;  ///< interface quadrature weights

  struct RealNode {
    double p;
    cplx w_branch;  ///< weight of the tracked-band term (zero under the arcs)
    cplx w_rest;    ///< weight of the remainder sum over all other bands
    NodeSpectral ns;
  };
  std::vector<RealNode> real_nodes;

  struct ArcNode {
    cplx p, w, lambda;
    Eigen::VectorXcd v_tr, w_tr;      ///< trace samples of the continued eigenpair
    Eigen::VectorXcd v_full, w_full;  ///< full vectors (kept for volume evaluation)
  };
  std::vector<ArcNode> arc_nodes;

  double min_step_overlap = 1.0;   ///< smallest node-to-node vector overlap along the arcs
  double max_exit_level = 0.0;     ///< largest |lambda_cont - lambda_fresh| at the arc exits
  double max_exit_mismatch = 0.0;  ///< largest vector mismatch at the arc exits

  const AssembledForms* forms_ptr = nullptr;  ///< set at assembly, used by the endpoint tail
  int tail_order = 2;  ///< endpoint-tail terms removed from shifted kernels (0, 1 or 2);
                       ///< the series is asymptotic, so cell k = 1 is always excluded
                       ///< from decay fits downstream

  /// The quadratic pencil is not periodic over the momentum period, so the
  /// integrand has a derivative kink at +-pi (values match by mirror
  /// symmetry, odd derivatives flip sign).  Integration by parts turns the
  /// kink into an alternating algebraic tail of the shifted-cell kernels,
  ///   (-1)^k [ -2 g'(pi)/k^2 + 2 g'''(pi)/k^4 + O(k^-6) ] / (2 pi),
  /// with g(p) the trace-restricted resolvent (lambda M - A(p))^-1.  The
  /// derivatives are exact resolvent products at the single point p = pi;
  /// kernel() removes the two leading orders so the evanescent content of
  /// the far cells is not buried under the kink tail.
  struct EndpointTail {
    Eigen::MatrixXcd g1, g3;  ///< trace-restricted g'(pi) and g'''(pi)
  };
  mutable std::map<std::pair<unsigned long long, unsigned long long>, EndpointTail> tail_cache;

  const EndpointTail& endpoint_tail(cplx lambda) const {
    unsigned long long kr, ki;
    const double re = lambda.real(), im = lambda.imag();
    std::memcpy(&kr, &re, sizeof kr);
    std::memcpy(&ki, &im, sizeof ki);
    const auto key = std::make_pair(kr, ki);
    auto it = tail_cache.find(key);
    if (it != tail_cache.end()) return it->second;
    const AssembledForms& F = *forms_ptr;
    const int n = int(F.M0.rows());
    const Eigen::MatrixXcd Mc = F.mass(eps).cast<cplx>();
    const Eigen::MatrixXcd Xi =
        Eigen::PartialPivLU<Eigen::MatrixXcd>(lambda * Mc - F.bloch_A(cplx(PI))).inverse();
    const Eigen::MatrixXcd B = F.bloch_A_prime(cplx(PI));
    const Eigen::MatrixXcd M0c = Eigen::MatrixXd(F.M0).cast<cplx>();
    const Eigen::MatrixXcd BX = B * Xi;
    const Eigen::MatrixXcd M0X = M0c * Xi;
    const Eigen::MatrixXcd g1_full = Xi * BX;
    const Eigen::MatrixXcd g3_full =
        6.0 * (Xi * (BX * BX * BX) + Xi * (M0X * BX) + Xi * (BX * M0X));
    const auto& tr = F.mesh->trace_dofs;
    EndpointTail t;
    t.g1.resize(nt, nt);
    t.g3.resize(nt, nt);
    for (int a = 0; a < nt; ++a)
      for (int b = 0; b < nt; ++b) {
        t.g1(a, b) = g1_full(tr[a], tr[b]);
        t.g3(a, b) = g3_full(tr[a], tr[b]);
      }
    (void)n;
    return tail_cache.emplace(key, std::move(t)).first->second;
  }

  Eigen::MatrixXcd kernel_branch(cplx lambda, int shift_cells = 0) const {
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(nt, nt);
    for (const auto& rn : real_nodes) {
      if (rn.w_branch == cplx(0)) continue;
      const cplx ph = std::exp(cplx(0, 1) * cplx(rn.p) * double(shift_cells));
      const cplx c = rn.w_branch * ph / (lambda - rn.ns.lambda[lo]);
      acc.noalias() += c * (rn.ns.RV.col(lo) * rn.ns.WR.row(lo));
    }
    for (const auto& an : arc_nodes) {
      const cplx ph = std::exp(cplx(0, 1) * an.p * double(shift_cells));
      const cplx c = an.w * ph / (lambda - an.lambda);
      acc.noalias() += c * (an.v_tr * an.w_tr.transpose());
    }
    return acc / (2.0 * PI);
  }

  Eigen::MatrixXcd kernel_remainder(cplx lambda, int shift_cells = 0) const {
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(nt, nt);
    if (real_nodes.empty()) return acc;
    const int nb = int(real_nodes.front().ns.lambda.size());
    Eigen::VectorXcd c(nb);
    for (const auto& rn : real_nodes) {
      const cplx ph = std::exp(cplx(0, 1) * cplx(rn.p) * double(shift_cells));
      for (int n = 0; n < nb; ++n) c[n] = rn.w_rest * ph / (lambda - rn.ns.lambda[n]);
      c[lo] = cplx(0);
      acc.noalias() += (rn.ns.RV * c.asDiagonal()) * rn.ns.WR;
    }
    return acc / (2.0 * PI);
  }

  Eigen::MatrixXcd kernel(cplx lambda, int shift_cells = 0) const {
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(nt, nt);
    if (real_nodes.empty()) return acc;
    const int nb = int(real_nodes.front().ns.lambda.size());
    Eigen::VectorXcd c(nb);
    for (const auto& rn : real_nodes) {
      const cplx ph = std::exp(cplx(0, 1) * cplx(rn.p) * double(shift_cells));
      for (int n = 0; n < nb; ++n) c[n] = rn.w_rest * ph / (lambda - rn.ns.lambda[n]);
      c[lo] = rn.w_branch * ph / (lambda - rn.ns.lambda[lo]);
      acc.noalias() += (rn.ns.RV * c.asDiagonal()) * rn.ns.WR;
    }
    for (const auto& an : arc_nodes) {
      const cplx ph = std::exp(cplx(0, 1) * an.p * double(shift_cells));
      const cplx c2 = an.w * ph / (lambda - an.lambda);
      acc.noalias() += c2 * (an.v_tr * an.w_tr.transpose());
    }
    acc /= 2.0 * PI;
    if (shift_cells != 0 && forms_ptr && tail_order > 0) {
      const EndpointTail& t = endpoint_tail(lambda);
      const double k2 = double(shift_cells) * double(shift_cells);
      const double sgn = (shift_cells % 2 == 0) ? 1.0 : -1.0;
      acc.noalias() -= (sgn / (PI * k2)) * t.g1;
      if (tail_order > 1) acc.noalias() += (sgn / (PI * k2 * k2)) * t.g3;
    }
    return acc;
  }

  /// Exact derivative of kernel() with respect to lambda.
  Eigen::MatrixXcd kernel_deriv(cplx lambda, int shift_cells = 0) const {
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(nt, nt);
    if (real_nodes.empty()) return acc;
    const int nb = int(real_nodes.front().ns.lambda.size());
    Eigen::VectorXcd c(nb);
    for (const auto& rn : real_nodes) {
      const cplx ph = std::exp(cplx(0, 1) * cplx(rn.p) * double(shift_cells));
      for (int n = 0; n < nb; ++n) {
        const cplx d = lambda - rn.ns.lambda[n];
        c[n] = -rn.w_rest * ph / (d * d);
      }
      const cplx dlo = lambda - rn.ns.lambda[lo];
      c[lo] = -rn.w_branch * ph / (dlo * dlo);
      acc.noalias() += (rn.ns.RV * c.asDiagonal()) * rn.ns.WR;
    }
    for (const auto& an : arc_nodes) {
      const cplx ph = std::exp(cplx(0, 1) * an.p * double(shift_cells));
      const cplx d = lambda - an.lambda;
      acc.noalias() += (-an.w * ph / (d * d)) * (an.v_tr * an.w_tr.transpose());
    }
    return acc / (2.0 * PI);
  }

  /// Kernel times the interface quadrature weights: the discrete operator
  /// acting on nodal densities.
  Eigen::MatrixXcd op(cplx lambda, int shift_cells = 0) const {
    return kernel(lambda, shift_cells) * trace_w.asDiagonal();
  }
};

inline ContinuedOperator assemble_continued_operator(SpectralCache& cache, const DiracPoint& dp,
                                                     const TraceOps& T, const DetourParams& prm) {
  const AssembledForms& F = cache.forms();
  const double q = dp.q_star;
  const double r = prm.radius;
  if (!(r > 0 && q - r > 0 && q + r < PI))
    throw SolverError("detour arcs must fit strictly inside the momentum period");
  ContinuedOperator op;
  op.nt = T.nt;
  op.lo = dp.lo;
  op.eps = cache.eps();
  op.forms_ptr = &F;
  op.lambda_ref = dp.lambda_star;
  op.q_detour = q;
  op.params = prm;
  op.trace_w = T.w;

  const auto seg_panels = [&](double len) {
    return std::max(4, int(std::ceil(len * prm.nodes_per_pi / PI)));
  };
  // Near the band-crossing momentum p = 0 the gapped pair bands pass within
  // O(eps) of the evaluation frequencies, so the integrands are regular but
  // sharply peaked there; the central segment is graded down to that scale.
  const double peak_inner = std::max(std::abs(op.eps) / 16.0, 1e-9);
  // Real segments: detour pieces carry both the tracked-band term and the
  // remainder; the gap fillers under the arcs carry the remainder only.
  struct Piece { double a, b; bool with_branch, refine_center; };
  const std::vector<Piece> pieces = {
      {-PI, -q - r, true, false}, {-q + r, q - r, true, true}, {q + r, PI, true, false},
      {-q - r, -q + r, false, false}, {q - r, q + r, false, false}};
  for (const auto& pc : pieces) {
    std::vector<QuadNode> nodes;
    if (pc.refine_center)
      append_peak_refined(nodes, pc.a, pc.b, 0.0, peak_inner, prm.nodes_per_pi);
    else
      append_segment(nodes, pc.a, pc.b, seg_panels(pc.b - pc.a));
    for (const auto& nd : nodes) {
      ContinuedOperator::RealNode rn;
      rn.p = nd.p.real();
      rn.w_rest = nd.w;
      rn.w_branch = pc.with_branch ? nd.w : cplx(0);
      rn.ns = cache.at(rn.p);
      op.real_nodes.push_back(std::move(rn));
    }
  }

  // Arcs: upper half-plane at -q, lower at +q (swapped when reflected).
  const Eigen::MatrixXcd Mc = cache.mass().cast<cplx>();
  const int arc_n = std::max(4, prm.nodes_per_pi);
  const double up = prm.reflect ? -1.0 : 1.0;
  const struct { double c, th0, th1; } arcs[2] = {{-q, up * PI, 0.0}, {q, -up * PI, 0.0}};
  for (const auto& arc : arcs) {
    std::vector<QuadNode> nodes;
    append_arc(nodes, arc.c, r, arc.th0, arc.th1, arc_n);
    // Anchor the branch at the real entry point of the arc.
    const cplx entry = arc.c + r * std::exp(cplx(0, arc.th0));
    BranchSample prev = sample_branch(F, Mc, entry, dp.lambda_star, Eigen::VectorXcd());
    for (const auto& nd : nodes) {
      BranchSample s = sample_branch(F, Mc, nd.p, dp.lambda_star, prev.v);
      if (s.residual > 1e-8)
        throw SolverError("branch continuation lost along the detour arc");
      const double ov = std::abs(prev.v.dot(s.v)) / (prev.v.norm() * s.v.norm());
      op.min_step_overlap = std::min(op.min_step_overlap, ov);
      ContinuedOperator::ArcNode an;
      an.p = nd.p;
      an.w = nd.w;
      an.lambda = s.lambda;
      an.v_full = s.v;
      an.w_full = s.w;
      an.v_tr = T.restrict_line(s.v);
      an.w_tr = T.restrict_line(s.w);
      op.arc_nodes.push_back(std::move(an));
      prev = std::move(s);
    }
    // Single-valuedness at the real exit point: the walked branch must agree
    // with an independently seeded solve.
    const cplx exitp = arc.c + r * std::exp(cplx(0, arc.th1));
    const BranchSample cont = sample_branch(F, Mc, exitp, dp.lambda_star, prev.v);
    const BranchSample indep = sample_branch(F, Mc, exitp, dp.lambda_star, Eigen::VectorXcd());
    op.max_exit_level = std::max(op.max_exit_level, std::abs(cont.lambda - indep.lambda));
    const double mis =
        1.0 - std::abs(cont.v.dot(indep.v)) / (cont.v.norm() * indep.v.norm());
    op.max_exit_mismatch = std::max(op.max_exit_mismatch, mis);
  }
  return op;
}

/// Cell fields of the kernel applied to a density: for each requested cell
/// shift k the full dof vector of the field on that cell.  Streams fresh
/// decompositions for the real nodes, so this is a one-shot evaluation.
inline std::vector<Eigen::VectorXcd> volume_field(SpectralCache& cache, const ContinuedOperator& op,
                                                  cplx lambda, const Eigen::VectorXcd& phi,
                                                  int k_min, int k_max) {
  const int n = int(cache.mass().rows());
  const int nk = k_max - k_min + 1;
  std::vector<Eigen::VectorXcd> out(nk, Eigen::VectorXcd::Zero(n));
  const Eigen::VectorXcd load = op.trace_w.asDiagonal() * phi;
  for (const auto& rn : op.real_nodes) {
    const HermitianBasis hb = cache.hermitian(rn.p);
    const int nb = int(hb.lambda.size());
    Eigen::VectorXcd rhs = rn.ns.WR * load;
    for (int b = 0; b < nb; ++b) {
      const cplx wb = (b == op.lo) ? rn.w_branch : rn.w_rest;
      rhs[b] *= wb / (lambda - rn.ns.lambda[b]);
    }
    const Eigen::VectorXcd g = hb.V * rhs;
    for (int k = k_min; k <= k_max; ++k)
      out[k - k_min] += std::exp(cplx(0, 1) * cplx(rn.p) * double(k)) * g;
  }
  for (const auto& an : op.arc_nodes) {
    const cplx coup = bilinear(an.w_tr, load);
    const cplx c = an.w * coup / (lambda - an.lambda);
    for (int k = k_min; k <= k_max; ++k)
      out[k - k_min] += c * std::exp(cplx(0, 1) * an.p * double(k)) * an.v_full;
  }
  for (auto& f : out) f /= 2.0 * PI;
  // Endpoint-kink tail removal (full-mesh analogue of the kernel() term),
  // built from resolvent solves against the extended density.
  if (op.tail_order > 0) {
    const AssembledForms& F = cache.forms();
    const Eigen::MatrixXcd Mc = F.mass(op.eps).cast<cplx>();
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(lambda * Mc - F.bloch_A(cplx(PI)));
    const Eigen::MatrixXcd B = F.bloch_A_prime(cplx(PI));
    const Eigen::MatrixXcd M0c = Eigen::MatrixXd(F.M0).cast<cplx>();
    const auto& tr = F.mesh->trace_dofs;
    Eigen::VectorXcd ext = Eigen::VectorXcd::Zero(n);
    for (int t = 0; t < op.nt; ++t) ext[tr[t]] = load[t];
    const Eigen::VectorXcd y0 = lu.solve(ext);
    const Eigen::VectorXcd y1 = lu.solve(B * y0);          // g'(pi) applied
    const Eigen::VectorXcd y2 = lu.solve(B * y1);
    const Eigen::VectorXcd y3 = lu.solve(B * y2);
    const Eigen::VectorXcd m1 = lu.solve(M0c * y1);
    const Eigen::VectorXcd m2 = lu.solve(B * lu.solve(M0c * y0));
    const Eigen::VectorXcd g3l = 6.0 * (y3 + m1 + m2);     // g'''(pi) applied
    // The endpoint brackets carry the mirror-symmetrized combination of the
    // derivative vectors; symmetrizing keeps the exact half-space identity
    // mirror(u_{-k}) = u_{+k} intact (the trace part is mirror-fixed, so the
    // certified trace ladders are unchanged).
    const Eigen::VectorXcd y1s = 0.5 * (y1 + apply_mirror(*F.mesh, y1));
    const Eigen::VectorXcd g3s = 0.5 * (g3l + apply_mirror(*F.mesh, g3l));
    for (int k = k_min; k <= k_max; ++k) {
      if (k == 0 || op.tail_order < 1) continue;
      const double k2 = double(k) * double(k);
      const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
      out[k - k_min] -= (sgn / (PI * k2)) * y1s;
      if (op.tail_order > 1) out[k - k_min] += (sgn / (PI * k2 * k2)) * g3s;
    }
  }
  return out;
}

/// One-sided x-derivative of the half-space field on the interface line,
/// taken from the right with a second-order three-column stencil.  The field
/// is a single layer, so this should recover half the density (the normal
/// derivative jumps by the density across the line, and the field is
/// mirror-even about it).
inline Eigen::VectorXcd one_sided_normal_derivative(SpectralCache& cache,
                                                    const ContinuedOperator& op, cplx lambda,
                                                    const Eigen::VectorXcd& phi) {
  const AssembledForms& F = cache.forms();
  const Mesh& mesh = *F.mesh;
  const int nt = op.nt;
  const Eigen::VectorXcd load = op.trace_w.asDiagonal() * phi;
  // Columns at x = 1/2, 1/2 + hx, 1/2 + 2 hx; each column's samples pick up
  // the intra-cell phase of the wave anchored at the interface line.
  std::array<std::vector<int>, 3> col_dofs;
  for (int c = 0; c < 3; ++c) {
    col_dofs[c].resize(nt);
    for (int t = 0; t < nt; ++t) {
      const int node = mesh.trace_right_node[t] + c;  // same row, c columns right
      col_dofs[c][t] = mesh.dof_of_node[node];
      if (col_dofs[c][t] < 0) throw GeometryError("stencil column lost a dof");
    }
  }
  std::array<Eigen::VectorXcd, 3> u;
  u.fill(Eigen::VectorXcd::Zero(nt));
  auto accumulate = [&](cplx p, cplx weight, const Eigen::VectorXcd& g) {
    for (int c = 0; c < 3; ++c) {
      const cplx ph = weight * std::exp(cplx(0, 1) * p * (double(c) * mesh.hx));
      for (int t = 0; t < nt; ++t) u[c][t] += ph * g[col_dofs[c][t]];
    }
  };
  for (const auto& rn : op.real_nodes) {
    const HermitianBasis hb = cache.hermitian(rn.p);
    const int nb = int(hb.lambda.size());
    Eigen::VectorXcd rhs = rn.ns.WR * load;
    for (int b = 0; b < nb; ++b) {
      const cplx wb = (b == op.lo) ? rn.w_branch : rn.w_rest;
      rhs[b] *= wb / (lambda - rn.ns.lambda[b]);
    }
    accumulate(cplx(rn.p), cplx(1.0), hb.V * rhs);
  }
  for (const auto& an : op.arc_nodes) {
    const cplx c = an.w * bilinear(an.w_tr, load) / (lambda - an.lambda);
    accumulate(an.p, c, an.v_full);
  }
  for (auto& uc : u) uc /= 2.0 * PI;
  return (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * mesh.hx);
}

/// Identity linking the detoured tracked-band integral to its principal
/// value plus half-residue dyads at the real radiating momenta.
struct ResidueIdentityReport {
  double q_hat = 0;             ///< real radiating momentum at this frequency
  double slope_plus = 0, slope_minus = 0;
  double slope_sym_defect = 0;  ///< | |slope(+)| - |slope(-)| | / |slope(+)|
  Eigen::MatrixXcd contour_part, pv_part, residue_part;
  double rel_defect = 0;           ///< ||contour - (pv + residue)|| / ||contour||
  double drop_residue_defect = 0;  ///< ||contour - pv|| / ||contour|| (residues must matter)
};

inline ResidueIdentityReport residue_identity_check(SpectralCache& cache,
                                                    const ContinuedOperator& op, double lambda,
                                                    double pv_tau, int nodes_per_pi) {
  ResidueIdentityReport rep;
  // Real radiating momentum: Newton on the tracked band along the real axis.
  double qh = op.q_detour;
  for (int it = 0; it < 50; ++it) {
    const HermitianBasis hb = cache.hermitian(qh);
    const double f = hb.lambda[op.lo] - lambda;
    if (std::abs(f) < 1e-13 * std::max(1.0, std::abs(lambda))) break;
    const double s = group_velocity(cache.forms(), cache.mass(), qh, hb.V.col(op.lo));
    qh -= f / s;
  }
  rep.q_hat = qh;
  // Half-residue dyads at +qh and -qh.
  auto fold_term = [&](double p, double& slope_out) {
    const HermitianBasis hb = cache.hermitian(p);
    const Eigen::VectorXcd v = hb.V.col(op.lo);
    slope_out = group_velocity(cache.forms(), cache.mass(), p, v);
    Eigen::VectorXcd vt(op.nt);
    const auto& tr = cache.forms().mesh->trace_dofs;
    for (int t = 0; t < op.nt; ++t) vt[t] = v[tr[t]];
    return Eigen::MatrixXcd(vt * vt.adjoint());
  };
  double sp = 0, sm = 0;
  const Eigen::MatrixXcd dyad_p = fold_term(qh, sp);
  const Eigen::MatrixXcd dyad_m = fold_term(-qh, sm);
  rep.slope_plus = sp;
  rep.slope_minus = sm;
  rep.slope_sym_defect = std::abs(std::abs(sp) - std::abs(sm)) / std::abs(sp);
  rep.residue_part =
      (cplx(0, -PI) / std::abs(sp) * dyad_p + cplx(0, -PI) / std::abs(sm) * dyad_m) / (2.0 * PI);
  // Principal value of the tracked-band integrand over the full period,
  // resolving the regular sharp peak the gapped band leaves near p = 0.
  const double peak_inner = std::max(std::abs(cache.eps()) / 16.0, 1e-9);
  const PvRule rule = pv_rule(-PI, PI, {-qh, qh}, pv_tau, nodes_per_pi, {{0.0, peak_inner}});
  auto integrand = [&](cplx p) {
    const NodeSpectral& ns = cache.at(p.real());
    return Eigen::MatrixXcd((ns.RV.col(op.lo) * ns.WR.row(op.lo)) /
                            (cplx(lambda) - ns.lambda[op.lo]));
  };
  rep.pv_part = rule.integrate(integrand) / (2.0 * PI);
  rep.contour_part = op.kernel_branch(lambda);
  rep.rel_defect =
      (rep.contour_part - rep.pv_part - rep.residue_part).norm() / rep.contour_part.norm();
  rep.drop_residue_defect = (rep.contour_part - rep.pv_part).norm() / rep.contour_part.norm();
  return rep;
}

/// Decomposition of the half-space field into the outgoing propagating wave
/// and the evanescent remainder, certified against the quadratic-pencil
/// exponent set.
struct RadiationReport {
  cplx amp_formula;             ///< -i <phi, conj u(.;conj q_plus)> / slope(q_plus)
  cplx amp_fit;                 ///< amplitude recovered from the far cells
  double amp_rel_defect = 0;    ///< |amp_fit - amp_formula| relative to max(|amp|, floor)
  cplx slow_momentum;           ///< slowest evanescent exponent (gap-edge pair pole)
  cplx slow_amp;                ///< its residue amplitude
  double slow_oracle_defect = 0;  ///< distance of slow_momentum to the exponent set
  double evan_rate_fit = 0;     ///< decay rate of the propagating-subtracted remainder
  double evan_rate_oracle = 0;  ///< slowest in-strip evanescent Im p from the exponent set
  double evan_rate_rel_defect = 0;
  double prop_rate_fit = 0;       ///< fitted growth rate of the propagating projection
  double prop_rate_expected = 0;  ///< -Im q_plus (positive when the field grows)
  std::vector<double> resid_norms;  ///< remainder norms per cell after removing the
                                    ///< propagating wave, k = 1..K
  std::vector<double> clean_norms;  ///< after also removing the slow pole (quadrature floor)
};

inline RadiationReport radiation_split(SpectralCache& cache, const ContinuedOperator& op,
                                       const ComplexMomentumRoot& root,
                                       const Eigen::VectorXcd& phi, int k_max = 8) {
  RadiationReport rep;
  const AssembledForms& F = cache.forms();
  const auto& tr = F.mesh->trace_dofs;
  Eigen::VectorXcd v_tr(op.nt), w_tr(op.nt);
  for (int t = 0; t < op.nt; ++t) {
    v_tr[t] = root.v_plus[tr[t]];
    w_tr[t] = root.w_plus[tr[t]];
  }
  // Bilinear pairing of the density with the left trace, with line weights.
  const Eigen::VectorXcd load = op.trace_w.asDiagonal() * phi;
  const cplx coup = bilinear(w_tr, load);
  rep.amp_formula = cplx(0, -1) * coup / root.slope_plus;

  // The gap-edge pair contributes a second pole with nearly imaginary
  // momentum of size ~ |eps|; its residue decays over ~1/|eps| cells and has
  // to be removed before the fast evanescent rate is visible.
  const Eigen::MatrixXcd Mc = F.mass(cache.eps()).cast<cplx>();
  BranchSample slow =
      newton_branch_root(F, Mc, root.lambda, cplx(0.0, std::max(std::abs(cache.eps()), 1e-8)));
  if (slow.p.imag() < 0) {  // mirror branch: lambda(-p) = lambda(p)
    slow.p = -slow.p;
    slow.v = apply_mirror(*F.mesh, slow.v);
    const Eigen::VectorXcd pv = apply_mirror(*F.mesh, slow.v);
    slow.w = pv / bilinear(pv, Mc * slow.v);
    slow.slope = -slow.slope;
  }
  rep.slow_momentum = slow.p;
  Eigen::VectorXcd vs_tr(op.nt), ws_tr(op.nt);
  for (int t = 0; t < op.nt; ++t) {
    vs_tr[t] = slow.v[tr[t]];
    ws_tr[t] = slow.w[tr[t]];
  }
  rep.slow_amp = cplx(0, -1) * bilinear(ws_tr, load) / slow.slope;

  std::vector<Eigen::VectorXcd> field(k_max);
  for (int k = 1; k <= k_max; ++k) field[k - 1] = op.kernel(root.lambda, k) * load;
  // Project the far cells on the propagating trace profile, after removing
  // the slow pole (its profile is not orthogonal to the propagating one).
  const double vn2 = v_tr.squaredNorm();
  auto amp_at = [&](int k) {
    const Eigen::VectorXcd clean =
        field[k - 1] - rep.slow_amp * std::exp(cplx(0, 1) * slow.p * double(k)) * vs_tr;
    const cplx a = v_tr.dot(clean);  // conjugates v_tr
    return a / vn2 * std::exp(-cplx(0, 1) * root.q_plus * double(k));
  };
  rep.amp_fit = amp_at(k_max);
  const double floor_amp = 1e-12 * phi.norm();
  rep.amp_rel_defect =
      std::abs(rep.amp_fit - rep.amp_formula) / std::max(std::abs(rep.amp_formula), floor_amp);
  // Remainder ladders.  resid: propagating wave removed; clean: slow pole
  // removed as well, leaving the quadrature floor.
  const double vsn2 = vs_tr.squaredNorm();
  std::vector<double> ks, slow_log, prop_log;
  for (int k = 1; k <= k_max; ++k) {
    const Eigen::VectorXcd resid =
        field[k - 1] - rep.amp_formula * std::exp(cplx(0, 1) * root.q_plus * double(k)) * v_tr;
    rep.resid_norms.push_back(resid.norm());
    const Eigen::VectorXcd clean =
        resid - rep.slow_amp * std::exp(cplx(0, 1) * slow.p * double(k)) * vs_tr;
    rep.clean_norms.push_back(clean.norm());
    if (k >= 4) {
      // Phase-exact projections isolate each pole amplitude well above the
      // quadrature floor; their log-slopes give the per-cell rates.  Each
      // projection removes the other pole first, and cells 1-3 are excluded:
      // the endpoint-tail removal is asymptotic in k and its leftover decays
      // over the first few cells, which a regression would otherwise read as
      // spurious exponential growth.
      const cplx ps = vs_tr.dot(resid) / vsn2;
      const cplx pq =
          v_tr.dot(field[k - 1] -
                   rep.slow_amp * std::exp(cplx(0, 1) * slow.p * double(k)) * vs_tr) /
          vn2;
      ks.push_back(double(k));
      slow_log.push_back(std::log(std::max(std::abs(ps), 1e-300)));
      prop_log.push_back(std::log(std::max(std::abs(pq), 1e-300)));
    }
  }
  rep.evan_rate_fit = -linear_fit(ks, slow_log).second;
  rep.prop_rate_fit = linear_fit(ks, prop_log).second;
  rep.prop_rate_expected = -root.q_plus.imag();
  // Oracle: exponents of the quadratic pencil at the real part of the
  // frequency (the imaginary shift moves them only at second order).  Only
  // exponents inside the momentum strip |Re p| <= pi can appear in the
  // period-integral field, so the slowest in-strip evanescent exponent is
  // the reference decay rate.
  const std::vector<cplx> expo =
      complex_momenta_at_frequency(F, cache.eps(), root.lambda.real());
  double best = 1e300, slow_defect = 1e300;
  for (const cplx& e : expo) {
    slow_defect = std::min(slow_defect, std::abs(e - slow.p));
    if (std::abs(e.real()) > PI + 1e-6) continue;
    const double im = e.imag();
    if (im > 1e-8 && im < best) best = im;
  }
  rep.slow_oracle_defect = slow_defect;
  rep.evan_rate_oracle = best;
  rep.evan_rate_rel_defect =
      std::abs(rep.evan_rate_fit - rep.evan_rate_oracle) / std::max(rep.evan_rate_oracle, 1e-300);
  return rep;
}

}  // namespace diracwg
