#pragma once
// Eigen-decompositions of the Bloch pencil (A(p), M(eps)) and a cache of
// trace-restricted spectral data keyed by momentum.
//
// For real p the pencil is Hermitian/positive and solved as such.  For
// complex p it is reduced with the Cholesky factor of M to a standard
// complex eigenproblem; right vectors V and left pairing rows Wh satisfy
// Wh M V = I, so (A - lambda M)^{-1} = V diag(1/(lambda_n - lambda)) Wh
// holds exactly and the rank-one terms v_n w_n^H are scale-invariant.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "diracwg/forms.hpp"

namespace diracwg {

struct HermitianBasis {
  Eigen::VectorXd lambda;  ///< ascending
  Eigen::MatrixXcd V;      ///< M-orthonormal columns
};

struct ComplexBasis {
  Eigen::VectorXcd lambda;  ///< sorted by (Re, Im) for determinism
  Eigen::MatrixXcd V;       ///< right vectors
  Eigen::MatrixXcd Wh;      ///< left rows, Wh * M * V = I
};

/// All bands of the Hermitian pencil at real momentum.
inline HermitianBasis solve_hermitian_pencil(const Eigen::MatrixXcd& A, const Eigen::MatrixXd& M) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> es(A, M.cast<cplx>());
  if (es.info() != Eigen::Success) throw SolverError("Hermitian pencil eigensolve failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

/// All bands of the pencil at complex momentum.
inline ComplexBasis solve_complex_pencil(const Eigen::MatrixXcd& A,
                                         const Eigen::LLT<Eigen::MatrixXd>& Mllt) {
  const Eigen::MatrixXd L = Mllt.matrixL();
  // B = L^{-1} A L^{-T}
  const Eigen::MatrixXcd X = L.cast<cplx>().triangularView<Eigen::Lower>().solve(A);
  const Eigen::MatrixXcd Xt = X.transpose();
  Eigen::MatrixXcd B = L.cast<cplx>().triangularView<Eigen::Lower>().solve(Xt).transpose();
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(B, /*computeEigenvectors=*/true);
  if (ces.info() != Eigen::Success) throw SolverError("complex pencil eigensolve failed");
  const int n = int(B.rows());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  const auto& ev = ces.eigenvalues();
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (ev[a].real() != ev[b].real()) return ev[a].real() < ev[b].real();
    return ev[a].imag() < ev[b].imag();
  });
  Eigen::MatrixXcd S(n, n);
  Eigen::VectorXcd lam(n);
  for (int i = 0; i < n; ++i) {
    S.col(i) = ces.eigenvectors().col(order[i]);
    lam[i] = ev[order[i]];
  }
  ComplexBasis out;
  out.lambda = lam;
  // V = L^{-T} S,   Wh = S^{-1} L^{-1}
  out.V = L.cast<cplx>().transpose().triangularView<Eigen::Upper>().solve(S);
  // Wh = S^{-1} L^{-1} = (L^{-T} S^{-T})^T
  Eigen::MatrixXcd Sinv = S.partialPivLu().solve(Eigen::MatrixXcd::Identity(n, n));
  const Eigen::MatrixXcd SinvT = Sinv.transpose();
  out.Wh = L.cast<cplx>().transpose().triangularView<Eigen::Upper>().solve(SinvT).transpose();
  return out;
}

/// Trace-restricted spectral data of one momentum: enough to apply every
/// band dyad between densities and traces on the interface line.
struct NodeSpectral {
  Eigen::VectorXcd lambda;
  Eigen::MatrixXcd RV;  ///< trace samples of right vectors, traceN x n
  Eigen::MatrixXcd WR;  ///< left rows restricted to trace columns, n x traceN
};

/// Cache of NodeSpectral keyed by momentum bits, bound to (forms, eps).
class SpectralCache {
 public:
  SpectralCache(const AssembledForms& F, double eps)
      : F_(&F), eps_(eps), M_(F.mass(eps)), llt_(M_) {
    if (llt_.info() != Eigen::Success) throw SolverError("mass matrix not positive definite");
    trace_ = F.mesh->trace_dofs;
  }

  double eps() const { return eps_; }
  const AssembledForms& forms() const { return *F_; }
  const Eigen::MatrixXd& mass() const { return M_; }
  const Eigen::LLT<Eigen::MatrixXd>& mass_llt() const { return llt_; }
  int trace_size() const { return int(trace_.size()); }

  /// Full Hermitian decomposition at real momentum (not cached).
  HermitianBasis hermitian(double p) const {
    return solve_hermitian_pencil(F_->bloch_A(p), M_);
  }
  /// Full complex decomposition (not cached).
  ComplexBasis complex_full(cplx p) const {
    return solve_complex_pencil(F_->bloch_A(p), llt_);
  }

  /// Trace-restricted data at momentum p, computed on first use.
  const NodeSpectral& at(cplx p) {
    const auto key = std::make_pair(bits(p.real()), bits(p.imag()));
    auto it = store_.find(key);
    if (it != store_.end()) return it->second;
    NodeSpectral ns = make_node(p);
    return store_.emplace(key, std::move(ns)).first->second;
  }

  /// As at(), but also hands back the full right/left vectors of one band
  /// selected by the caller (for branch continuation along contours).
  NodeSpectral make_node(cplx p, Eigen::MatrixXcd* fullV = nullptr,
                         Eigen::MatrixXcd* fullWh = nullptr, Eigen::VectorXcd* fullLam = nullptr) const {
    NodeSpectral ns;
    const int nt = int(trace_.size());
    if (p.imag() == 0.0) {
      HermitianBasis hb = hermitian(p.real());
      const int n = int(hb.lambda.size());
      ns.lambda = hb.lambda.cast<cplx>();
      ns.RV.resize(nt, n);
      for (int t = 0; t < nt; ++t) ns.RV.row(t) = hb.V.row(trace_[t]);
      // V^H M V = I makes V^H the left factor of the resolvent:
      // (A - lambda M)^{-1} = V diag(1/(lambda_n - lambda)) V^H.
      ns.WR.resize(n, nt);
      for (int t = 0; t < nt; ++t) ns.WR.col(t) = hb.V.row(trace_[t]).adjoint();
      if (fullV) *fullV = hb.V;
      if (fullWh) *fullWh = hb.V.adjoint();
      if (fullLam) *fullLam = ns.lambda;
    } else {
      ComplexBasis cb = complex_full(p);
      const int n = int(cb.lambda.size());
      ns.lambda = cb.lambda;
      ns.RV.resize(nt, n);
      for (int t = 0; t < nt; ++t) ns.RV.row(t) = cb.V.row(trace_[t]);
      ns.WR.resize(n, nt);
      for (int t = 0; t < nt; ++t) ns.WR.col(t) = cb.Wh.col(trace_[t]);
      if (fullV) *fullV = cb.V;
      if (fullWh) *fullWh = cb.Wh;
      if (fullLam) *fullLam = ns.lambda;
    }
    return ns;
  }

  /// Insert a precomputed node (used when the caller needed the full basis).
  const NodeSpectral& put(cplx p, NodeSpectral ns) {
    const auto key = std::make_pair(bits(p.real()), bits(p.imag()));
    return store_.insert_or_assign(key, std::move(ns)).first->second;
  }
  bool contains(cplx p) const {
    return store_.count(std::make_pair(bits(p.real()), bits(p.imag()))) != 0;
  }

 private:
  static std::uint64_t bits(double v) {
    std::uint64_t u;
    static_assert(sizeof u == sizeof v);
    std::memcpy(&u, &v, sizeof u);
    return u;
  }
  const AssembledForms* F_;
  double eps_;
  Eigen::MatrixXd M_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::vector<int> trace_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, NodeSpectral> store_;
};

/// All complex Bloch exponents p with det(A(p) - lambda M) = 0 at fixed
/// frequency, via companion linearization of the quadratic pencil
/// (K - lambda M) - i p (C - C^T) + p^2 M0.
inline std::vector<cplx> complex_momenta_at_frequency(const AssembledForms& F, double eps,
                                                      double lambda) {
  const int n = F.n;
  Eigen::MatrixXd Kl = Eigen::MatrixXd(F.K) - lambda * F.mass(eps);
  Eigen::MatrixXd Cs = Eigen::MatrixXd(F.C) - Eigen::MatrixXd(F.C).transpose();
  Eigen::PartialPivLU<Eigen::MatrixXd> m0lu(Eigen::MatrixXd(F.M0));
  Eigen::MatrixXcd comp = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
  comp.topRightCorner(n, n).setIdentity();
  comp.bottomLeftCorner(n, n) = (-m0lu.solve(Kl)).cast<cplx>();
  comp.bottomRightCorner(n, n) = cplx(0, 1) * m0lu.solve(Cs).cast<cplx>();
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(comp, /*computeEigenvectors=*/false);
  if (ces.info() != Eigen::Success) throw SolverError("quadratic momentum pencil failed");
  std::vector<cplx> roots(ces.eigenvalues().data(), ces.eigenvalues().data() + 2 * n);
  std::sort(roots.begin(), roots.end(), [](cplx a, cplx b) {
    if (std::abs(a.imag()) != std::abs(b.imag())) return std::abs(a.imag()) < std::abs(b.imag());
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return roots;
}

/// Overlap-based selection of the column of V2 continuing `prev` (M-inner
/// product); returns index and writes the normalized overlap if asked.
inline int match_branch(const Eigen::VectorXcd& prev, const Eigen::MatrixXd& M,
                        const Eigen::MatrixXcd& V2, double* overlap_out = nullptr) {
  const Eigen::MatrixXcd Mc = M.cast<cplx>();
  const Eigen::VectorXcd Mp = Mc * prev;
  int best = -1;
  double best_ov = -1, prev_n = std::sqrt(std::abs(prev.dot(Mc * prev)));
  for (int j = 0; j < V2.cols(); ++j) {
    const cplx ip = Mp.dot(V2.col(j));
    const double vn = std::sqrt(std::abs(V2.col(j).dot(Mc * V2.col(j))));
    const double ov = std::abs(ip) / (prev_n * vn);
    if (ov > best_ov) { best_ov = ov; best = j; }
  }
  if (overlap_out) *overlap_out = best_ov;
  return best;
}

}  // namespace diracwg
