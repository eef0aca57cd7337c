#pragma once
// Band diagrams over the Brillouin zone, conical crossing detection, and
// per-mesh calibration of the symmetry-splitting index term.

#include <optional>

#include "diracwg/pencil.hpp"

namespace diracwg {

inline IndexField base_field(const Config& cfg) {
  IndexField f = cfg.base;
  f.height = cfg.geometry.height;
  return f;
}
inline IndexField direction_field(const Config& cfg) {
  IndexField f = cfg.direction;
  f.height = cfg.geometry.height;
  return f;
}

/// Hellmann-Feynman group velocity of a simple band at real momentum.
inline double group_velocity(const AssembledForms& F, const Eigen::MatrixXd& M, double p,
                             const Eigen::VectorXcd& v) {
  const cplx num = v.dot(F.bloch_A_prime(p) * v);
  const cplx den = v.dot(M.cast<cplx>() * v);
  return (num / den).real();
}

struct BandDiagram {
  Eigen::VectorXd p;    ///< symmetric grid on [-pi, pi], odd length
  Eigen::MatrixXd mu;   ///< ascending eigenvalues, n_bands x np
  Eigen::MatrixXi ana;  ///< ana(b,k): ascending index at p_k of continuation branch b
  double min_overlap = 1.0;  ///< worst column-to-column matching overlap
};

/// Ascending bands plus a continuation labeling swept from the left edge,
/// matched column to column by mass-weighted overlaps with a greedy
/// best-pair assignment.
inline BandDiagram solve_bands(const AssembledForms& F, double eps, int n_bands, int np) {
  if (np % 2 == 0) ++np;
  const Eigen::MatrixXd M = F.mass(eps);
  const int n = F.n;
  const int nb = std::min(n_bands, n);
  const int nt = std::min(nb + 4, n);  // tracked candidates, padded above
  BandDiagram bd;
  bd.p.setLinSpaced(np, -PI, PI);
  bd.mu.resize(nb, np);
  bd.ana.resize(nb, np);
  Eigen::MatrixXcd prevV;
  std::vector<int> branch_asc(nb);
  const Eigen::MatrixXcd Mc = M.cast<cplx>();
  for (int k = 0; k < np; ++k) {
    HermitianBasis hb = solve_hermitian_pencil(F.bloch_A(bd.p[k]), M);
    bd.mu.col(k) = hb.lambda.head(nb);
    const Eigen::MatrixXcd Vt = hb.V.leftCols(nt);
    if (k == 0) {
      for (int b = 0; b < nb; ++b) branch_asc[b] = b;
    } else {
      Eigen::MatrixXd ov = (prevV.adjoint() * (Mc * Vt)).cwiseAbs();  // nb x nt
      // greedy best-pair assignment
      std::vector<int> assign(nb, -1);
      std::vector<char> used_row(nb, 0), used_col(nt, 0);
      for (int it = 0; it < nb; ++it) {
        int bi = -1, bj = -1;
        double best = -1;
        for (int i = 0; i < nb; ++i) {
          if (used_row[i]) continue;
          for (int j = 0; j < nt; ++j) {
            if (used_col[j]) continue;
            if (ov(i, j) > best) { best = ov(i, j); bi = i; bj = j; }
          }
        }
        assign[bi] = bj;
        used_row[bi] = 1;
        used_col[bj] = 1;
        bd.min_overlap = std::min(bd.min_overlap, best);
      }
      for (int b = 0; b < nb; ++b) branch_asc[b] = assign[b];
    }
    for (int b = 0; b < nb; ++b) bd.ana(b, k) = branch_asc[b];
    // carry the matched vectors forward in branch order
    prevV.resize(n, nb);
    for (int b = 0; b < nb; ++b) prevV.col(b) = Vt.col(branch_asc[b]);
  }
  return bd;
}

/// Conical crossing data at momentum zero plus the fold crossing of the
/// descending branch and global level-isolation margins.
struct DiracPoint {
  int lo = -1, hi = -1;        ///< ascending indices of the pair at p = 0
  double lambda_star = 0;      ///< crossing level
  double alpha = 0;            ///< cone slope (> 0)
  double q_star = 0;           ///< fold momentum (> 0); crossing at -q_star
  double mu_prime_fold = 0;    ///< slope of the tracked branch at -q_star (< 0)
  Eigen::VectorXcd v_plus;     ///< velocity +alpha basis vector, phase-fixed
  Eigen::VectorXcd v_minus;    ///< mirror image of v_plus, velocity -alpha
  double gap_p0 = 0;           ///< residual splitting of the pair at p = 0
  double cone_rel_residual = 0;  ///< relative misfit of the linear cone nearby
  double margin_other = 0;     ///< min |mu - lambda*| over all non-pair bands and momenta
  double min_overlap = 1.0;    ///< worst branch-continuation overlap in the sweep
  int crossings_plus = 0;      ///< level crossings of the +alpha branch on (-pi, 0)
  int crossings_minus = 0;     ///< level crossings of the -alpha branch on (-pi, 0)
};

namespace detail {

/// Track one continuation branch to momentum `p` starting from (p0, v0);
/// returns eigenvalue, updates the anchor vector in place.
inline double track_branch_to(const AssembledForms& F, const Eigen::MatrixXd& M, double p,
                              Eigen::VectorXcd& anchor, double* overlap_out = nullptr) {
  HermitianBasis hb = solve_hermitian_pencil(F.bloch_A(p), M);
  double ov = 0;
  const int j = match_branch(anchor, M, hb.V, &ov);
  anchor = hb.V.col(j);
  if (overlap_out) *overlap_out = ov;
  return hb.lambda[j];
}

}  // namespace detail

/// Locate the conical pair at p = 0, build the velocity-diagonal basis with
/// the interface-trace phase convention, find the fold crossing, and sweep
/// the half zone for isolation margins.
inline DiracPoint find_dirac(const AssembledForms& F, const Config& cfg) {
  const Eigen::MatrixXd M = F.M_base;  // unperturbed medium
  const Eigen::MatrixXcd Mc = M.cast<cplx>();
  const Mesh& mesh = *F.mesh;
  const int n = F.n;
  DiracPoint dp;

  HermitianBasis h0 = solve_hermitian_pencil(F.bloch_A(0.0), M);
  if (cfg.level_pair_lo >= 0) {
    dp.lo = cfg.level_pair_lo;
    dp.hi = cfg.level_pair_hi;
    if (dp.hi != dp.lo + 1 || dp.hi >= n) throw ConfigError("level_pair must be consecutive indices");
  } else {
    // auto-detect: smallest relative splitting among consecutive levels
    double best = std::numeric_limits<double>::max();
    const int lim = std::min(cfg.n_bands, n - 1);
    for (int i = 1; i < lim; ++i) {
      const double rel = (h0.lambda[i + 1] - h0.lambda[i]) / std::abs(h0.lambda[i + 1]);
      if (rel < best) { best = rel; dp.lo = i; dp.hi = i + 1; }
    }
  }
  dp.lambda_star = 0.5 * (h0.lambda[dp.lo] + h0.lambda[dp.hi]);
  dp.gap_p0 = h0.lambda[dp.hi] - h0.lambda[dp.lo];
  if (dp.gap_p0 > cfg.degeneracy_rtol * std::abs(dp.lambda_star))
    throw AssumptionError("pair at p = 0 is not degenerate to tolerance; run calibration");

  // diagonalize the velocity form on the two-dimensional eigenspace
  const Eigen::MatrixXcd Ap = F.bloch_A_prime(0.0);
  Eigen::MatrixXcd U(n, 2);
  U.col(0) = h0.V.col(dp.lo);
  U.col(1) = h0.V.col(dp.hi);
  Eigen::Matrix2cd B2 = U.adjoint() * (Ap * U);
  B2 = 0.5 * (B2 + B2.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es2(B2);
  dp.alpha = es2.eigenvalues()[1];
  if (dp.alpha <= 0) throw AssumptionError("cone slope is not positive");
  Eigen::VectorXcd vp = U * es2.eigenvectors().col(1);

  // phase convention: interface trace integral real and positive
  cplx s = 0;
  for (std::size_t t = 0; t < mesh.trace_dofs.size(); ++t)
    s += mesh.trace_w[t] * vp[mesh.trace_dofs[t]];
  if (std::abs(s) > 1e-10) {
    vp *= std::conj(s) / std::abs(s);
  } else {
    int imax = 0;
    const Eigen::VectorXd av = vp.cwiseAbs();
    av.maxCoeff(&imax);
    vp *= std::conj(vp[imax]) / std::abs(vp[imax]);
  }
  dp.v_plus = vp;
  dp.v_minus.resize(n);
  for (int d = 0; d < n; ++d) dp.v_minus[mesh.mirror_dof[d]] = vp[d];

  // cone fit on a few nearby momenta: mu_pm(p) vs lambda* +- alpha |p|
  {
    const double h = PI / (cfg.p_grid - 1);
    double worst = 0;
    for (double pq : {0.25 * h, 0.5 * h}) {
      HermitianBasis hb = solve_hermitian_pencil(F.bloch_A(pq), M);
      const double pred_lo = dp.lambda_star - dp.alpha * pq;
      const double pred_hi = dp.lambda_star + dp.alpha * pq;
      worst = std::max(worst, std::abs(hb.lambda[dp.lo] - pred_lo) / (dp.alpha * pq));
      worst = std::max(worst, std::abs(hb.lambda[dp.hi] - pred_hi) / (dp.alpha * pq));
    }
    dp.cone_rel_residual = worst;
  }

  // sweep the left half zone: track both branches, accumulate margins,
  // count level crossings, bracket the fold
  const int nh = (cfg.p_grid + 1) / 2;
  const double hstep = PI / (nh - 1);
  Eigen::VectorXcd a_plus = dp.v_plus, a_minus = dp.v_minus;
  double prev_fp = 0, prev_fm = 0;  // branch level offsets, both start at 0
  double bracket_l = 0, bracket_r = 0;
  Eigen::VectorXcd bracket_anchor;
  double margin = std::numeric_limits<double>::max();
  for (int k = 1; k < nh; ++k) {
    const double p = -k * hstep;
    HermitianBasis hb = solve_hermitian_pencil(F.bloch_A(p), M);
    double ov_p = 0, ov_m = 0;
    const int jp = match_branch(a_plus, M, hb.V, &ov_p);
    const int jm = match_branch(a_minus, M, hb.V, &ov_m);
    a_plus = hb.V.col(jp);
    a_minus = hb.V.col(jm);
    dp.min_overlap = std::min({dp.min_overlap, ov_p, ov_m});
    if (jp == jm) throw SolverError("branch tracking collapsed onto one band");
    for (int i = 0; i < n; ++i) {
      if (i == jp || i == jm) continue;
      margin = std::min(margin, std::abs(hb.lambda[i] - dp.lambda_star));
    }
    const double fp = hb.lambda[jp] - dp.lambda_star;
    const double fm = hb.lambda[jm] - dp.lambda_star;
    if (k == 1) {
      if (fp >= 0 || fm <= 0) throw AssumptionError("branch slopes at p = 0 are inconsistent");
    } else {
      if (fp == 0 || (fp > 0) != (prev_fp > 0)) {
        ++dp.crossings_plus;
        if (dp.crossings_plus == 1) {
          bracket_l = p;
          bracket_r = p + hstep;
          bracket_anchor = a_plus;
        }
      }
      if (fm == 0 || (fm > 0) != (prev_fm > 0)) ++dp.crossings_minus;
    }
    prev_fp = fp;
    prev_fm = fm;
  }
  // non-pair levels at p = 0 count toward the margin as well
  for (int i = 0; i < n; ++i) {
    if (i == dp.lo || i == dp.hi) continue;
    margin = std::min(margin, std::abs(h0.lambda[i] - dp.lambda_star));
  }
  dp.margin_other = margin;
  if (dp.crossings_plus != 1)
    throw AssumptionError("descending branch must cross the level exactly once in (-pi, 0)");
  if (dp.crossings_minus != 0)
    throw AssumptionError("ascending branch must stay above the level on (-pi, 0)");

  // refine the fold crossing by bisection on the tracked branch
  Eigen::VectorXcd anchor = bracket_anchor;
  auto ffold = [&](double p) {
    return detail::track_branch_to(F, M, p, anchor) - dp.lambda_star;
  };
  const double pf = bisect_root(ffold, bracket_l, bracket_r, 1e-13 * std::abs(dp.lambda_star));
  dp.q_star = -pf;
  dp.mu_prime_fold = group_velocity(F, M, pf, anchor);
  if (dp.mu_prime_fold >= 0) throw AssumptionError("fold crossing slope must be negative");
  return dp;
}

/// Mirror-parity sector bases: columns span the +1 and -1 eigenspaces of
/// the reflection permutation.
struct MirrorSectors {
  Eigen::SparseMatrix<double> Qe, Qo;
};

inline MirrorSectors build_mirror_sectors(const Mesh& mesh) {
  const int n = mesh.n_dofs;
  std::vector<Eigen::Triplet<double>> te, to;
  int ce = 0, co = 0;
  const double r = 1.0 / std::sqrt(2.0);
  for (int d = 0; d < n; ++d) {
    const int m = mesh.mirror_dof[d];
    if (m == d) {
      te.emplace_back(d, ce++, 1.0);
    } else if (d < m) {
      te.emplace_back(d, ce, r);
      te.emplace_back(m, ce, r);
      ++ce;
      to.emplace_back(d, co, r);
      to.emplace_back(m, co, -r);
      ++co;
    }
  }
  MirrorSectors ms;
  ms.Qe.resize(n, ce);
  ms.Qo.resize(n, co);
  ms.Qe.setFromTriplets(te.begin(), te.end());
  ms.Qo.setFromTriplets(to.begin(), to.end());
  return ms;
}

struct CalibrationResult {
  double value = 0;   ///< tuned amplitude written back into the config
  double gap = 0;     ///< signed even-minus-odd splitting at the tuned value
  int evaluations = 0;
};

namespace detail {

inline double sector_level(const Eigen::MatrixXd& A, const Eigen::MatrixXd& M, double target) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, M);
  if (es.info() != Eigen::Success) throw SolverError("sector eigensolve failed");
  int best = 0;
  double dist = std::numeric_limits<double>::max();
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    const double d = std::abs(es.eigenvalues()[i] - target);
    if (d < dist) { dist = d; best = i; }
  }
  return es.eigenvalues()[best];
}

}  // namespace detail

/// Close the pair splitting at p = 0 by bisecting the designated index-term
/// amplitude.  The splitting is measured between the mirror-parity sectors,
/// which stays well defined through the degeneracy.  Writes the tuned
/// amplitude into cfg and returns it.
inline CalibrationResult calibrate_degeneracy(Config& cfg, const Mesh& mesh) {
  if (cfg.tune_term <= 0 || cfg.tune_term > int(cfg.base.terms.size()))
    throw ConfigError("tune_term must name a base index term");
  const MirrorSectors ms = build_mirror_sectors(mesh);
  const IndexField dir = direction_field(cfg);

  auto splitting = [&](double t, double& level_ref) {
    Config local = cfg;
    local.base.terms[cfg.tune_term - 1].amplitude = t;
    AssembledForms F = assemble_forms(mesh, base_field(local), dir);
    const Eigen::MatrixXd K(F.K);
    const Eigen::MatrixXd Ke = Eigen::MatrixXd(ms.Qe.transpose() * K * ms.Qe);
    const Eigen::MatrixXd Ko = Eigen::MatrixXd(ms.Qo.transpose() * K * ms.Qo);
    const Eigen::MatrixXd Me = Eigen::MatrixXd(ms.Qe.transpose() * F.M_base * ms.Qe);
    const Eigen::MatrixXd Mo = Eigen::MatrixXd(ms.Qo.transpose() * F.M_base * ms.Qo);
    const double le = detail::sector_level(Ke, Me, level_ref);
    const double lo = detail::sector_level(Ko, Mo, level_ref);
    level_ref = 0.5 * (le + lo);
    return le - lo;
  };

  // reference level: pair mean from a full solve at the bracket midpoint
  double level_ref;
  {
    Config local = cfg;
    local.base.terms[cfg.tune_term - 1].amplitude = 0.5 * (cfg.tune_lo + cfg.tune_hi);
    AssembledForms F = assemble_forms(mesh, base_field(local), dir);
    HermitianBasis h0 = solve_hermitian_pencil(F.bloch_A(0.0), F.M_base);
    int lo = cfg.level_pair_lo, hi = cfg.level_pair_hi;
    if (lo < 0) {
      double best = std::numeric_limits<double>::max();
      const int lim = std::min(cfg.n_bands, F.n - 1);
      for (int i = 1; i < lim; ++i) {
        const double rel = (h0.lambda[i + 1] - h0.lambda[i]) / std::abs(h0.lambda[i + 1]);
        if (rel < best) { best = rel; lo = i; hi = i + 1; }
      }
    }
    level_ref = 0.5 * (h0.lambda[lo] + h0.lambda[hi]);
  }

  CalibrationResult res;
  double a = cfg.tune_lo, b = cfg.tune_hi;
  double fa = splitting(a, level_ref), fb = splitting(b, level_ref);
  res.evaluations = 2;
  if (fa == 0) { res.value = a; res.gap = 0; }
  else if (fb == 0) { res.value = b; res.gap = 0; }
  else {
    if ((fa > 0) == (fb > 0))
      throw AssumptionError("tuning bracket does not straddle the degeneracy");
    for (int it = 0; it < 80 && b - a > 1e-15 * (std::abs(a) + std::abs(b) + 1); ++it) {
      const double m = 0.5 * (a + b);
      const double fm = splitting(m, level_ref);
      ++res.evaluations;
      if (fm == 0) { a = b = m; break; }
      if ((fm > 0) == (fa > 0)) { a = m; fa = fm; } else { b = m; fb = fm; }
    }
    res.value = 0.5 * (a + b);
    res.gap = splitting(res.value, level_ref);
    ++res.evaluations;
  }
  cfg.base.terms[cfg.tune_term - 1].amplitude = res.value;
  return res;
}

}  // namespace diracwg
