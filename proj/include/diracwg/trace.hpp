#pragma once
// Trace-line machinery: restriction of cell fields to the vertical line
// x = 1/2, quadrature along that line, and a nodal first x-derivative there.
//
// Convention: a Bloch wave is represented by its periodic factor vt on the
// cell together with the phase e^{i p (x1 - 1/2)} anchored at the trace line.
// Restriction to the line therefore needs no phase factor for any complex p,
// and the first-derivative trace is (i p vt + d1 vt)|_line.

#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "diracwg/common.hpp"
#include "diracwg/mesh.hpp"

namespace diracwg {

struct TraceOps {
  int nt = 0;                       ///< number of trace nodes
  Eigen::VectorXd y;                ///< node ordinates, ascending
  Eigen::VectorXd w;                ///< trapezoid weights per node
  std::vector<int> dofs;            ///< cell dof per trace node
  Eigen::SparseMatrix<double> D1;   ///< nodal d/dx on the line, nt x n_dofs

  /// Values of the periodic factor on the line.
  Eigen::VectorXcd restrict_line(const Eigen::VectorXcd& v) const {
    Eigen::VectorXcd r(nt);
    for (int t = 0; t < nt; ++t) r[t] = v[dofs[t]];
    return r;
  }

  /// First-derivative trace of the wave with momentum p: i p vt + d1 vt.
  Eigen::VectorXcd d1_line(const Eigen::VectorXcd& v, cplx p) const {
    Eigen::VectorXcd r = D1 * v;
    for (int t = 0; t < nt; ++t) r[t] += cplx(0, 1) * p * v[dofs[t]];
    return r;
  }

  /// Unweighted bilinear pairing on the line: sum w a b (no conjugation).
  cplx pair_bilinear(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) const {
    cplx s = 0;
    for (int t = 0; t < nt; ++t) s += w[t] * a[t] * b[t];
    return s;
  }

  /// Sesquilinear pairing on the line: sum w a conj(b).
  cplx pair_sesq(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) const {
    cplx s = 0;
    for (int t = 0; t < nt; ++t) s += w[t] * a[t] * std::conj(b[t]);
    return s;
  }
};

/// Build the trace operators.  The nodal derivative is the area-weighted
/// average of the piecewise-constant interpolant gradient over each trace
/// node's triangle patch; the mesh mirrors its diagonals across the line, so
/// the patches are x-symmetric and the average is second-order accurate.
inline TraceOps make_trace_ops(const Mesh& mesh) {
  TraceOps T;
  T.nt = int(mesh.trace_dofs.size());
  T.dofs = mesh.trace_dofs;
  T.y = Eigen::Map<const Eigen::VectorXd>(mesh.trace_y.data(), T.nt);
  T.w = Eigen::Map<const Eigen::VectorXd>(mesh.trace_w.data(), T.nt);

  std::vector<int> row_of_node(mesh.X.size(), -1);
  for (int t = 0; t < T.nt; ++t) row_of_node[mesh.trace_right_node[t]] = t;

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd patch_area = Eigen::VectorXd::Zero(T.nt);
  for (const auto& tri : mesh.tris) {
    int hit = -1;
    for (int k = 0; k < 3; ++k)
      if (row_of_node[tri[k]] >= 0) hit = (hit < 0 ? k : hit);
    if (hit < 0) continue;
    const double xs[3] = {mesh.X[tri[0]], mesh.X[tri[1]], mesh.X[tri[2]]};
    const double ys[3] = {mesh.Y[tri[0]], mesh.Y[tri[1]], mesh.Y[tri[2]]};
    const double det = (xs[1] - xs[0]) * (ys[2] - ys[0]) - (xs[2] - xs[0]) * (ys[1] - ys[0]);
    const double area = 0.5 * std::abs(det);
    // x-component of the shape gradients
    const double bx[3] = {(ys[1] - ys[2]) / det, (ys[2] - ys[0]) / det, (ys[0] - ys[1]) / det};
    for (int k = 0; k < 3; ++k) {
      const int row = row_of_node[tri[k]];
      if (row < 0) continue;
      patch_area[row] += area;
      for (int m = 0; m < 3; ++m)
        trip.emplace_back(row, mesh.dof_of_node[tri[m]], area * bx[m]);
    }
  }
  T.D1.resize(T.nt, mesh.n_dofs);
  T.D1.setFromTriplets(trip.begin(), trip.end());
  for (int t = 0; t < T.nt; ++t)
    if (patch_area[t] <= 0) throw GeometryError("trace node without a triangle patch");
  T.D1 = Eigen::VectorXd(patch_area.cwiseInverse()).asDiagonal() * T.D1;
  return T;
}

/// One-sided energy flux through the line for waves with real momentum p:
/// integral over the line of (d1 u) conj(v).
inline cplx flux_form(const TraceOps& T, double p, const Eigen::VectorXcd& u,
                      const Eigen::VectorXcd& v) {
  return T.pair_sesq(T.d1_line(u, p), T.restrict_line(v));
}

}  // namespace diracwg
