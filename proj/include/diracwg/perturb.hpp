#pragma once
// Coupling coefficient of the index perturbation between the two crossing
// eigenvectors, the reduced two-level model built from it, and checks of the
// locally-opened gap, the eigenvector combination, and the fold expansion
// against full discrete eigensolves.

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "band.hpp"
#include "common.hpp"
#include "forms.hpp"
#include "pencil.hpp"

namespace diracwg {

/// Matrix elements of the index perturbation on the crossing pair.
/// t_star follows the reduced-matrix convention: the off-diagonal entry of
/// the two-level model is +t_star*eps, i.e. t_star = +lambda* v_n^H M_dir v_m.
struct CouplingData {
  cplx t_star{0.0, 0.0};
  cplx diag_n{0.0, 0.0};
  cplx diag_m{0.0, 0.0};
  double relaxed_condition_margin = 0;  ///< 2|t*| - |diag_n + diag_m|
};

inline CouplingData compute_coupling(const DiracPoint& dp, const AssembledForms& F) {
  const Eigen::MatrixXcd Md = Eigen::MatrixXd(F.M_dir).cast<cplx>();
  CouplingData c;
  c.t_star = dp.lambda_star * (dp.v_plus.adjoint() * Md * dp.v_minus)(0);
  c.diag_n = dp.lambda_star * (dp.v_plus.adjoint() * Md * dp.v_plus)(0);
  c.diag_m = dp.lambda_star * (dp.v_minus.adjoint() * Md * dp.v_minus)(0);
  c.relaxed_condition_margin = 2.0 * std::abs(c.t_star) - std::abs(c.diag_n + c.diag_m);
  return c;
}

/// Leading-order two-level matrix at (eps, p, lambda1).
struct ReducedMatrix {
  cplx M11, M12, M21, M22;
};

inline ReducedMatrix reduced_matrix(const CouplingData& c, const DiracPoint& dp, double eps,
                                    double p, cplx lambda1) {
  return {lambda1 - dp.alpha * p, c.t_star * eps, std::conj(c.t_star) * eps,
          lambda1 + dp.alpha * p};
}

/// The two leading-order model eigenvalues lambda* -+ sqrt(alpha^2 p^2 + |t*|^2 eps^2).
inline std::pair<double, double> reduced_dispersion(const CouplingData& c, const DiracPoint& dp,
                                                    double eps, double p) {
  const double s = std::hypot(dp.alpha * p, std::abs(c.t_star) * eps);
  return {dp.lambda_star - s, dp.lambda_star + s};
}

/// Coefficients of the predicted eigenvectors in the (v_plus, v_minus) basis,
/// written in the division-safe form valid on both signs of p:
///   lower band ~ (s - alpha p) v_plus + conj(t*) eps v_minus
///   upper band ~ (alpha p + s) v_plus - conj(t*) eps v_minus
/// (for p > 0 the lower form is parallel to f v_plus + v_minus with
///  f = t* eps / (alpha p + s)).
struct PairCoefficients {
  cplx lower_plus, lower_minus;
  cplx upper_plus, upper_minus;
};

inline PairCoefficients predicted_pair(const CouplingData& c, const DiracPoint& dp, double eps,
                                       double p) {
  const double s = std::hypot(dp.alpha * p, std::abs(c.t_star) * eps);
  PairCoefficients pc;
  pc.lower_plus = cplx(s - dp.alpha * p, 0.0);
  pc.lower_minus = std::conj(c.t_star) * eps;
  pc.upper_plus = cplx(dp.alpha * p + s, 0.0);
  pc.upper_minus = -std::conj(c.t_star) * eps;
  return pc;
}

/// True if (eps, p) lies inside the regime where the local expansions are
/// quantitative: |alpha p| and |t* eps| both below 1e-2 * lambda*.
inline bool asymptotic_gate(const CouplingData& c, const DiracPoint& dp, double eps, double p) {
  const double cap = 1e-2 * std::abs(dp.lambda_star);
  return std::abs(dp.alpha * p) <= cap && std::abs(c.t_star) * std::abs(eps) <= cap;
}

struct GapCheckRow {
  double eps = 0, p = 0;
  double exact_lo = 0, exact_hi = 0;
  double model_lo = 0, model_hi = 0;
  double rel_defect = 0;  ///< max level |exact-model| / s
};

struct GapCheckReport {
  std::vector<GapCheckRow> rows;
  double worst_rel_defect = 0;
  double fitted_order = 0;      ///< slope of log(rel defect) vs log(|p| + |eps|)
  double gap_ratio_1e2 = 0;     ///< gap/(2|t*|eps) at p=0, eps=1e-2 (if sampled)
  double gap_ratio_1e3 = 0;     ///< same at eps=1e-3
};

/// Compare exact discrete pair levels with the two-level model over a sweep.
inline GapCheckReport gap_asymptotics_check(const AssembledForms& F, const DiracPoint& dp,
                                            const CouplingData& c,
                                            const std::vector<double>& eps_list,
                                            const std::vector<double>& p_list) {
  GapCheckReport rep;
  std::vector<double> lx, ly;
  for (double eps : eps_list) {
    const Eigen::MatrixXd Me = F.mass(eps);
    for (double p : p_list) {
      if (!asymptotic_gate(c, dp, eps, p)) continue;
      const HermitianBasis hb = solve_hermitian_pencil(F.bloch_A(p), Me);
      const auto [mlo, mhi] = reduced_dispersion(c, dp, eps, p);
      GapCheckRow row;
      row.eps = eps;
      row.p = p;
      row.exact_lo = hb.lambda[dp.lo];
      row.exact_hi = hb.lambda[dp.hi];
      row.model_lo = mlo;
      row.model_hi = mhi;
      const double s = std::hypot(dp.alpha * p, std::abs(c.t_star) * eps);
      if (s > 0) {
        row.rel_defect =
            std::max(std::abs(row.exact_lo - mlo), std::abs(row.exact_hi - mhi)) / s;
        const double scale = std::abs(p) + std::abs(eps);
        if (row.rel_defect > 1e-12 && scale > 0) {
          lx.push_back(std::log(scale));
          ly.push_back(std::log(row.rel_defect));
        }
        if (p == 0.0) {
          const double ratio = (row.exact_hi - row.exact_lo) / (2.0 * std::abs(c.t_star) * eps);
          if (eps == 1e-2) rep.gap_ratio_1e2 = ratio;
          if (eps == 1e-3) rep.gap_ratio_1e3 = ratio;
        }
      }
      rep.worst_rel_defect = std::max(rep.worst_rel_defect, row.rel_defect);
      rep.rows.push_back(row);
    }
  }
  if (lx.size() >= 2) rep.fitted_order = linear_fit(lx, ly).first;
  return rep;
}

struct EigvecCheckRow {
  double eps = 0, p = 0;
  double angle_lower = 0, angle_upper = 0;  ///< subspace angles, radians
};

/// Subspace angle between a vector and the span of another in the M metric.
inline double m_angle(const Eigen::VectorXcd& u, const Eigen::VectorXcd& w,
                      const Eigen::MatrixXd& M) {
  const Eigen::MatrixXcd Mc = M.cast<cplx>();
  const cplx ip = (u.adjoint() * Mc * w)(0);
  const double nu = std::sqrt(std::abs((u.adjoint() * Mc * u)(0).real()));
  const double nw = std::sqrt(std::abs((w.adjoint() * Mc * w)(0).real()));
  double cosang = std::abs(ip) / (nu * nw);
  if (cosang > 1.0) cosang = 1.0;
  return std::acos(cosang);
}

/// Angle between the exact discrete pair eigenvectors and the predicted
/// combinations at one (eps, p).
inline EigvecCheckRow eigenfunction_asymptotics_check(const AssembledForms& F,
                                                      const DiracPoint& dp,
                                                      const CouplingData& c, double eps,
                                                      double p) {
  const Eigen::MatrixXd Me = F.mass(eps);
  const HermitianBasis hb = solve_hermitian_pencil(F.bloch_A(p), Me);
  const PairCoefficients pc = predicted_pair(c, dp, eps, p);
  const Eigen::VectorXcd lower = pc.lower_plus * dp.v_plus + pc.lower_minus * dp.v_minus;
  const Eigen::VectorXcd upper = pc.upper_plus * dp.v_plus + pc.upper_minus * dp.v_minus;
  EigvecCheckRow row;
  row.eps = eps;
  row.p = p;
  row.angle_lower = m_angle(hb.V.col(dp.lo), lower, Me);
  row.angle_upper = m_angle(hb.V.col(dp.hi), upper, Me);
  return row;
}

struct FoldCheckRow {
  double eps = 0, p = 0;
  double level_defect = 0;   ///< |lambda_lo(p; eps) - lambda*|
  double slope_defect = 0;   ///< |lambda'_lo(p; eps) - mu'(fold)|
  double vec_angle = 0;      ///< angle to the unperturbed fold eigenvector
  double scale = 0;          ///< |p -+ q*| + |eps|
};

struct FoldCheckReport {
  std::vector<FoldCheckRow> rows;
  double fitted_linear_bound = 0;  ///< max over rows of defect / scale
  double fitted_slope_bound = 0;   ///< same for the derivative defect
};

/// Verify the fold expansion around +-q*: level, derivative, and eigenvector
/// stay within a linear envelope of (|p -+ q*| + |eps|).
inline FoldCheckReport fold_asymptotics_check(const AssembledForms& F, const DiracPoint& dp,
                                              double eps) {
  FoldCheckReport rep;
  const Eigen::MatrixXd M0 = F.mass(0.0);
  const Eigen::MatrixXd Me = F.mass(eps);
  for (double sgn : {-1.0, 1.0}) {
    const double q = sgn * dp.q_star;
    const HermitianBasis ref = solve_hermitian_pencil(F.bloch_A(q), M0);
    // the unperturbed crossing band at +-q* is the ascending band nearest lambda*
    int bref = 0;
    double dist = std::numeric_limits<double>::max();
    for (int i = 0; i < ref.lambda.size(); ++i) {
      const double d = std::abs(ref.lambda[i] - dp.lambda_star);
      if (d < dist) { dist = d; bref = i; }
    }
    const double slope_ref = group_velocity(F, M0, q, ref.V.col(bref));
    for (double dq : {-0.02, -0.01, 0.0, 0.01, 0.02}) {
      const double p = q + dq;
      const HermitianBasis hb = solve_hermitian_pencil(F.bloch_A(p), Me);
      int b = 0;
      double d2 = std::numeric_limits<double>::max();
      for (int i = 0; i < hb.lambda.size(); ++i) {
        const double d = std::abs(hb.lambda[i] - dp.lambda_star);
        if (d < d2) { d2 = d; b = i; }
      }
      FoldCheckRow row;
      row.eps = eps;
      row.p = p;
      row.level_defect = std::abs(hb.lambda[b] - dp.lambda_star);
      row.slope_defect = std::abs(group_velocity(F, Me, p, hb.V.col(b)) - slope_ref);
      row.vec_angle = m_angle(hb.V.col(b), ref.V.col(bref), Me);
      row.scale = std::abs(dq) + std::abs(eps);
      rep.rows.push_back(row);
      rep.fitted_linear_bound = std::max(rep.fitted_linear_bound, row.level_defect / row.scale);
      rep.fitted_slope_bound = std::max(rep.fitted_slope_bound, row.slope_defect / row.scale);
    }
  }
  return rep;
}

}  // namespace diracwg
