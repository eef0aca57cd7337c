#pragma once
// P1 finite-element forms on the periodic cell and the momentum-shifted
// Bloch pencil built from them.
//
// Weak form of the shifted operator acting on periodic functions:
//   [K - i p (C - C^T) + p^2 M0] u = lambda [M_base + eps M_dir + eps^2 M_dir2] u
// with K the plain stiffness, C_ij = int psi_i d_x psi_j, M0 the plain mass,
// and the index-weighted masses carrying n^2, 2 n dn, dn^2.  The skew
// combination C - C^T absorbs the hole-boundary term of the shifted operator,
// so A(p) is Hermitian for real p and satisfies A(conj p) = A(p)^H.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "diracwg/mesh.hpp"

namespace diracwg {

struct AssembledForms {
  Eigen::SparseMatrix<double> K, C, M0, M_base, M_dir, M_dir2;
  Eigen::SparseMatrix<double> P_mirror;  ///< dof permutation for x -> 1-x
  int n = 0;                             ///< dof count
  const Mesh* mesh = nullptr;

  /// A(p) = K - i p (C - C^T) + p^2 M0, dense complex.
  Eigen::MatrixXcd bloch_A(cplx p) const {
    Eigen::MatrixXcd A = Eigen::MatrixXcd(K.cast<cplx>());
    const Eigen::SparseMatrix<double> Cs = Eigen::SparseMatrix<double>(C - Eigen::SparseMatrix<double>(C.transpose()));
    A -= cplx(0, 1) * p * Eigen::MatrixXcd(Cs.cast<cplx>());
    A += p * p * Eigen::MatrixXcd(M0.cast<cplx>());
    return A;
  }
  /// dA/dp = -i (C - C^T) + 2 p M0.
  Eigen::MatrixXcd bloch_A_prime(cplx p) const {
    const Eigen::SparseMatrix<double> Cs = Eigen::SparseMatrix<double>(C - Eigen::SparseMatrix<double>(C.transpose()));
    Eigen::MatrixXcd A = cplx(0, -1) * Eigen::MatrixXcd(Cs.cast<cplx>());
    A += 2.0 * p * Eigen::MatrixXcd(M0.cast<cplx>());
    return A;
  }
  /// M(eps) = M_base + eps M_dir + eps^2 M_dir2, dense real.
  Eigen::MatrixXd mass(double eps) const {
    return Eigen::MatrixXd(M_base) + eps * Eigen::MatrixXd(M_dir) + eps * eps * Eigen::MatrixXd(M_dir2);
  }
};

namespace detail {
/// Degree-2 triangle rule: edge midpoints, equal weights.
inline void quad_points(const double* xs, const double* ys, double* qx, double* qy) {
  const int a[3] = {0, 1, 2}, b[3] = {1, 2, 0};
  for (int q = 0; q < 3; ++q) {
    qx[q] = 0.5 * (xs[a[q]] + xs[b[q]]);
    qy[q] = 0.5 * (ys[a[q]] + ys[b[q]]);
  }
}
/// P1 shape values at the three edge midpoints.
inline double shape_mid(int node, int q) {
  // midpoint q=0 between nodes 0,1; q=1 between 1,2; q=2 between 2,0
  static const double tbl[3][3] = {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};
  return tbl[q][node];
}
}  // namespace detail

/// Assemble all cell forms for a mesh, base index field, and direction field.
inline AssembledForms assemble_forms(const Mesh& mesh, const IndexField& base,
                                     const IndexField& direction) {
  using T = Eigen::Triplet<double>;
  std::vector<T> tK, tC, tM0, tMb, tMd, tMd2;
  const int n = mesh.n_dofs;

  for (const auto& t : mesh.tris) {
    const double xs[3] = {mesh.X[t[0]], mesh.X[t[1]], mesh.X[t[2]]};
    const double ys[3] = {mesh.Y[t[0]], mesh.Y[t[1]], mesh.Y[t[2]]};
    const int dof[3] = {mesh.dof_of_node[t[0]], mesh.dof_of_node[t[1]], mesh.dof_of_node[t[2]]};
    const double det = (xs[1] - xs[0]) * (ys[2] - ys[0]) - (xs[2] - xs[0]) * (ys[1] - ys[0]);
    const double area = 0.5 * det;
    // constant P1 gradients
    double gx[3], gy[3];
    gx[0] = (ys[1] - ys[2]) / det; gy[0] = (xs[2] - xs[1]) / det;
    gx[1] = (ys[2] - ys[0]) / det; gy[1] = (xs[0] - xs[2]) / det;
    gx[2] = (ys[0] - ys[1]) / det; gy[2] = (xs[1] - xs[0]) / det;

    double qx[3], qy[3];
    detail::quad_points(xs, ys, qx, qy);
    double nb[3], nd[3];
    for (int q = 0; q < 3; ++q) {
      nb[q] = base.eval(qx[q], qy[q]);
      nd[q] = direction.eval(qx[q], qy[q]);
    }
    const double wq = area / 3.0;

    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        tK.emplace_back(dof[i], dof[j], area * (gx[i] * gx[j] + gy[i] * gy[j]));
        // int psi_i d_x psi_j: gradient constant, int psi_i = area/3
        tC.emplace_back(dof[i], dof[j], gx[j] * area / 3.0);
        double m0 = 0, mb = 0, md = 0, md2 = 0;
        for (int q = 0; q < 3; ++q) {
          const double pp = detail::shape_mid(i, q) * detail::shape_mid(j, q) * wq;
          m0 += pp;
          mb += pp * nb[q] * nb[q];
          md += pp * 2.0 * nb[q] * nd[q];
          md2 += pp * nd[q] * nd[q];
        }
        tM0.emplace_back(dof[i], dof[j], m0);
        tMb.emplace_back(dof[i], dof[j], mb);
        tMd.emplace_back(dof[i], dof[j], md);
        tMd2.emplace_back(dof[i], dof[j], md2);
      }
  }

  AssembledForms F;
  F.n = n;
  F.mesh = &mesh;
  auto fill = [&](Eigen::SparseMatrix<double>& A, std::vector<T>& tr) {
    A.resize(n, n);
    A.setFromTriplets(tr.begin(), tr.end());
  };
  fill(F.K, tK); fill(F.C, tC); fill(F.M0, tM0);
  fill(F.M_base, tMb); fill(F.M_dir, tMd); fill(F.M_dir2, tMd2);

  std::vector<T> tP;
  for (int d = 0; d < n; ++d) tP.emplace_back(mesh.mirror_dof[d], d, 1.0);
  F.P_mirror.resize(n, n);
  F.P_mirror.setFromTriplets(tP.begin(), tP.end());
  return F;
}

/// Boundary form int_{hole boundaries} n1 psi_i psi_j (n1 = x-component of the
/// outward normal); equals C + C^T exactly for a consistent assembly.
inline Eigen::SparseMatrix<double> assemble_hole_boundary_form(const Mesh& mesh) {
  using T = Eigen::Triplet<double>;
  std::vector<T> tb;
  // Outward normal points from the fluid side into the hole.  For an edge on
  // a circle the normal is radially inward w.r.t. the circle; recover it from
  // the edge tangent rotated so it points away from the fluid (hole centre side).
  for (const auto& e : mesh.hole_edges) {
    const int p = e[0], q = e[1];
    const double ex = mesh.X[q] - mesh.X[p], ey = mesh.Y[q] - mesh.Y[p];
    const double len = std::hypot(ex, ey);
    // two candidate normals; pick the one pointing toward the hole interior,
    // i.e. away from the midpoint displaced along it staying outside elements.
    double nx1 = ey / len, ny1 = -ex / len;
    const double mx = 0.5 * (mesh.X[p] + mesh.X[q]), my = 0.5 * (mesh.Y[p] + mesh.Y[q]);
    // The mesh stores no circle ids here; decide by testing which side the
    // element lies on: probe both sides against all triangles is costly, so
    // use the fact that hole edges bound exactly one triangle.
    // Find that triangle.
    double sign = 0;
    for (const auto& t : mesh.tris) {
      int hit = 0;
      for (int k = 0; k < 3; ++k) hit += (t[k] == p) + (t[k] == q);
      if (hit == 2) {
        const double cx = (mesh.X[t[0]] + mesh.X[t[1]] + mesh.X[t[2]]) / 3.0;
        const double cy = (mesh.Y[t[0]] + mesh.Y[t[1]] + mesh.Y[t[2]]) / 3.0;
        sign = ((cx - mx) * nx1 + (cy - my) * ny1 > 0) ? -1.0 : 1.0;
        break;
      }
    }
    nx1 *= sign; ny1 *= sign;
    const int dp = mesh.dof_of_node[p], dq = mesh.dof_of_node[q];
    // Simpson on the edge: int psi_i psi_j over the edge
    const double diag = len / 3.0, off = len / 6.0;
    tb.emplace_back(dp, dp, nx1 * diag);
    tb.emplace_back(dq, dq, nx1 * diag);
    tb.emplace_back(dp, dq, nx1 * off);
    tb.emplace_back(dq, dp, nx1 * off);
  }
  Eigen::SparseMatrix<double> B(mesh.n_dofs, mesh.n_dofs);
  B.setFromTriplets(tb.begin(), tb.end());
  return B;
}

}  // namespace diracwg
