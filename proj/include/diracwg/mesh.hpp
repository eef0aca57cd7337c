#pragma once
// Triangulation of the periodic cell (0,1) x (0,H) minus circular holes.
//
// The mesh is a structured grid whose diagonals are mirrored across x = 1/2,
// with nodes near a hole boundary snapped radially onto the circle.  All
// classification runs on the left half and is copied index-wise to the right,
// so the reflection x -> 1-x is an exact node permutation by construction.

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "diracwg/config.hpp"

namespace diracwg {

struct Mesh {
  int nx = 0, ny = 0;           ///< grid divisions; x = 1/2 is column nx/2
  double hx = 0, hy = 0;
  double height = 1.0;

  std::vector<double> X, Y;     ///< grid-node coordinates, (nx+1)*(ny+1), snapped
  std::vector<char> removed;    ///< grid nodes swallowed by a hole
  std::vector<std::array<int, 3>> tris;  ///< surviving triangles (grid-node ids, ccw)

  std::vector<int> dof_of_node;  ///< grid node -> dof (-1 if removed); right column shares left dofs
  std::vector<int> node_of_dof;  ///< representative grid node per dof
  int n_dofs = 0;

  std::vector<int> mirror_dof;   ///< dof permutation realizing x -> 1-x

  std::vector<int> trace_dofs;   ///< dofs on x = 1/2, ascending y
  std::vector<double> trace_y;
  std::vector<double> trace_w;   ///< trapezoid weights per trace node (segment-wise)
  std::vector<int> trace_right_node;  ///< grid node ids of the trace column (same order)

  std::vector<std::array<int, 2>> hole_edges;  ///< element edges lying on hole boundaries

  double min_quality = 1.0;      ///< min of 4*sqrt(3)*area/sum(edge^2) over elements
  double max_diameter = 0.0;

  int node_id(int i, int j) const { return j * (nx + 1) + i; }
  double node_x(int i, int j) const { return X[node_id(i, j)]; }
  double node_y(int i, int j) const { return Y[node_id(i, j)]; }
};

/// Build the cell mesh.  Throws GeometryError when the requested geometry
/// cannot be represented at this resolution.
inline Mesh build_mesh(const CellGeometry& geo, double target_h) {
  if (target_h <= 0) throw GeometryError("target_h must be positive");
  Mesh m;
  m.height = geo.height;
  m.nx = 2 * std::max(2, int(std::ceil(1.0 / (2.0 * target_h))));
  m.ny = std::max(2, int(std::round(geo.height / target_h)));
  m.hx = 1.0 / m.nx;
  m.hy = geo.height / m.ny;
  const int nn = (m.nx + 1) * (m.ny + 1);
  m.X.assign(nn, 0.0);
  m.Y.assign(nn, 0.0);
  m.removed.assign(nn, 0);

  const double snap_band = 0.35 * std::min(m.hx, m.hy);

  for (const auto& ob : geo.obstacles)
    if (ob.r < 2.0 * std::max(m.hx, m.hy))
      throw GeometryError("obstacle radius is under-resolved at this target_h");

  // Base coordinates; removal flags from the left half, mirrored index-wise.
  for (int j = 0; j <= m.ny; ++j)
    for (int i = 0; i <= m.nx; ++i) {
      const int id = m.node_id(i, j);
      m.X[id] = double(i) / m.nx;
      m.Y[id] = geo.height * j / m.ny;
    }
  for (int j = 0; j <= m.ny; ++j) {
    for (int i = 0; i <= m.nx / 2; ++i) {
      const int id = m.node_id(i, j);
      for (const auto& ob : geo.obstacles)
        if (std::hypot(m.X[id] - ob.cx, m.Y[id] - ob.cy) < ob.r) m.removed[id] = 1;
    }
    for (int i = m.nx / 2 + 1; i <= m.nx; ++i)
      m.removed[m.node_id(i, j)] = m.removed[m.node_id(m.nx - i, j)];
  }

  // Radial projection onto the closest circle; snapped nodes sit on the
  // circle exactly, which the boundary-form and trace code rely on.
  std::vector<char> snapped(nn, 0);
  auto snap_left_node = [&](int i, int j) {
    const int id = m.node_id(i, j);
    if (snapped[id]) return;
    int best = -1;
    double bd = std::numeric_limits<double>::max();
    for (std::size_t k = 0; k < geo.obstacles.size(); ++k) {
      const auto& ob = geo.obstacles[k];
      const double d = std::abs(std::hypot(m.X[id] - ob.cx, m.Y[id] - ob.cy) - ob.r);
      if (d < bd) { bd = d; best = int(k); }
    }
    if (best < 0) return;
    if (bd > 1.6 * std::max(m.hx, m.hy))
      throw GeometryError("hole boundary snap would move a node too far");
    const auto& ob = geo.obstacles[best];
    const double dx = m.X[id] - ob.cx, dy = m.Y[id] - ob.cy, d = std::hypot(dx, dy);
    if (d == 0) throw GeometryError("grid node coincides with obstacle centre");
    m.X[id] = ob.cx + dx * ob.r / d;
    m.Y[id] = ob.cy + dy * ob.r / d;
    snapped[id] = 1;
  };
  auto mirror_coords = [&] {
    for (int j = 0; j <= m.ny; ++j)
      for (int i = m.nx / 2 + 1; i <= m.nx; ++i) {
        const int id = m.node_id(i, j), src = m.node_id(m.nx - i, j);
        m.X[id] = 1.0 - m.X[src];
        m.Y[id] = m.Y[src];
        snapped[id] = snapped[src];
      }
  };

  // First snap pass: nodes within the band of a circle, plus every kept node
  // sharing a triangulation edge with a removed node.
  for (int j = 0; j <= m.ny; ++j)
    for (int i = 0; i <= m.nx / 2; ++i) {
      const int id = m.node_id(i, j);
      if (m.removed[id]) continue;
      bool near = false;
      for (const auto& ob : geo.obstacles)
        if (std::abs(std::hypot(m.X[id] - ob.cx, m.Y[id] - ob.cy) - ob.r) <= snap_band)
          near = true;
      if (!near) {
        std::array<std::pair<int, int>, 6> nb;
        nb[0] = {i - 1, j}; nb[1] = {i + 1, j}; nb[2] = {i, j - 1}; nb[3] = {i, j + 1};
        if (i < m.nx / 2) { nb[4] = {i + 1, j + 1}; nb[5] = {i - 1, j - 1}; }
        else              { nb[4] = {i - 1, j - 1}; nb[5] = {i + 1, j - 1}; }
        for (const auto& [ii, jj] : nb) {
          if (ii < 0 || ii > m.nx || jj < 0 || jj > m.ny) continue;
          if (m.removed[m.node_id(ii, jj)]) near = true;
        }
      }
      if (near) snap_left_node(i, j);
    }
  mirror_coords();

  // Obstacles must stay clear of the outer boundary at this resolution.
  for (int j = 0; j <= m.ny; ++j)
    for (int i : {0, m.nx})
      if (m.removed[m.node_id(i, j)] || snapped[m.node_id(i, j)])
        throw GeometryError("obstacle reaches a periodic face at this resolution");
  for (int i = 0; i <= m.nx; ++i)
    for (int j : {0, m.ny})
      if (m.removed[m.node_id(i, j)] || snapped[m.node_id(i, j)])
        throw GeometryError("obstacle reaches the strip boundary at this resolution");

  auto inside_any = [&](double x, double y) {
    for (const auto& ob : geo.obstacles)
      if (std::hypot(x - ob.cx, y - ob.cy) < ob.r * (1.0 - 1e-12)) return true;
    return false;
  };

  // Triangulate: left cells split along the a-c diagonal, right cells along
  // b-d (the exact mirror).  Elements with a removed vertex or a centroid
  // inside a hole are dropped; chord slivers whose vertices were all snapped
  // onto one circle fall to the centroid test.
  auto build_tris = [&] {
    m.tris.clear();
    for (int cj = 0; cj < m.ny; ++cj)
      for (int ci = 0; ci < m.nx; ++ci) {
        const int a = m.node_id(ci, cj), b = m.node_id(ci + 1, cj);
        const int c = m.node_id(ci + 1, cj + 1), d = m.node_id(ci, cj + 1);
        std::array<std::array<int, 3>, 2> cand;
        if (ci < m.nx / 2) cand = {{{a, b, c}, {a, c, d}}};
        else               cand = {{{a, b, d}, {b, c, d}}};
        for (auto tri : cand) {
          if (m.removed[tri[0]] || m.removed[tri[1]] || m.removed[tri[2]]) continue;
          const double cx = (m.X[tri[0]] + m.X[tri[1]] + m.X[tri[2]]) / 3.0;
          const double cy = (m.Y[tri[0]] + m.Y[tri[1]] + m.Y[tri[2]]) / 3.0;
          if (inside_any(cx, cy)) continue;
          const double area = 0.5 * ((m.X[tri[1]] - m.X[tri[0]]) * (m.Y[tri[2]] - m.Y[tri[0]]) -
                                     (m.X[tri[2]] - m.X[tri[0]]) * (m.Y[tri[1]] - m.Y[tri[0]]));
          if (area < 0) std::swap(tri[1], tri[2]);
          m.tris.push_back(tri);
        }
      }
  };
  // Element edges with a single incident triangle, excluding the outer walls
  // and the periodic faces: these bound the holes.
  auto boundary_edges = [&] {
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : m.tris)
      for (int e = 0; e < 3; ++e) {
        const auto key = std::minmax(t[e], t[(e + 1) % 3]);
        ++edge_count[key];
      }
    std::vector<std::array<int, 2>> out;
    for (const auto& [key, cnt] : edge_count) {
      if (cnt != 1) continue;
      const auto [p, q] = key;
      const int ip = p % (m.nx + 1), jp = p / (m.nx + 1);
      const int iq = q % (m.nx + 1), jq = q / (m.nx + 1);
      const bool wall = (jp == 0 && jq == 0) || (jp == m.ny && jq == m.ny);
      const bool face = (ip == 0 && iq == 0) || (ip == m.nx && iq == m.nx);
      if (!wall && !face) out.push_back({p, q});
    }
    return out;
  };

  // Snap-and-refilter until every hole-boundary vertex sits on its circle.
  for (int pass = 0;; ++pass) {
    build_tris();
    if (m.tris.empty()) throw GeometryError("triangulation is empty");
    m.hole_edges = boundary_edges();
    std::vector<int> offenders;
    for (const auto& e : m.hole_edges)
      for (int v = 0; v < 2; ++v)
        if (!snapped[e[v]]) offenders.push_back(e[v]);
    if (offenders.empty()) break;
    if (pass >= 3) throw GeometryError("hole boundary did not stabilize");
    for (int id : offenders) {
      int i = id % (m.nx + 1);
      const int j = id / (m.nx + 1);
      if (i > m.nx / 2) i = m.nx - i;
      snap_left_node(i, j);
    }
    mirror_coords();
  }

  // Quality and diameter; snapping must not create degenerate elements.
  for (const auto& t : m.tris) {
    const double x0 = m.X[t[0]], y0 = m.Y[t[0]], x1 = m.X[t[1]], y1 = m.Y[t[1]],
                 x2 = m.X[t[2]], y2 = m.Y[t[2]];
    const double area = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0));
    const double l0 = (x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0);
    const double l1 = (x2 - x1) * (x2 - x1) + (y2 - y1) * (y2 - y1);
    const double l2 = (x0 - x2) * (x0 - x2) + (y0 - y2) * (y0 - y2);
    m.min_quality = std::min(m.min_quality, 4.0 * std::sqrt(3.0) * area / (l0 + l1 + l2));
    m.max_diameter = std::max(m.max_diameter, std::sqrt(std::max({l0, l1, l2})));
  }
  if (m.min_quality < 0.05)
    throw GeometryError("mesh quality too low (min quality " + std::to_string(m.min_quality) + ")");

  // Degrees of freedom: surviving nodes, right column folded onto the left.
  m.dof_of_node.assign(nn, -1);
  for (int j = 0; j <= m.ny; ++j)
    for (int i = 0; i < m.nx; ++i) {
      const int id = m.node_id(i, j);
      if (!m.removed[id]) {
        m.dof_of_node[id] = m.n_dofs++;
        m.node_of_dof.push_back(id);
      }
    }
  for (int j = 0; j <= m.ny; ++j)
    m.dof_of_node[m.node_id(m.nx, j)] = m.dof_of_node[m.node_id(0, j)];

  // Mirror permutation on dofs (x -> 1-x maps grid node (i,j) to (nx-i,j)).
  m.mirror_dof.assign(m.n_dofs, -1);
  for (int d = 0; d < m.n_dofs; ++d) {
    const int id = m.node_of_dof[d];
    const int i = id % (m.nx + 1), j = id / (m.nx + 1);
    const int md = m.dof_of_node[m.node_id(m.nx - i, j)];
    if (md < 0) throw GeometryError("mesh is not mirror-symmetric");
    m.mirror_dof[d] = md;
  }
  for (int d = 0; d < m.n_dofs; ++d)
    if (m.mirror_dof[m.mirror_dof[d]] != d)
      throw GeometryError("mirror permutation is not an involution");

  // Trace line x = 1/2: surviving nodes of the centre column, ascending y,
  // trapezoid weights restarted on every hole crossing.
  for (int j = 0; j <= m.ny; ++j) {
    const int id = m.node_id(m.nx / 2, j);
    if (m.removed[id]) continue;
    m.trace_dofs.push_back(m.dof_of_node[id]);
    m.trace_y.push_back(m.Y[id]);
    m.trace_right_node.push_back(id);
  }
  const int nt = int(m.trace_dofs.size());
  if (nt < 3) throw GeometryError("trace line has too few nodes");
  std::vector<char> linked(std::max(0, nt - 1), 0);
  for (int k = 0; k + 1 < nt; ++k) {
    const double ym = 0.5 * (m.trace_y[k] + m.trace_y[k + 1]);
    linked[k] = !inside_any(0.5, ym);
  }
  m.trace_w.assign(nt, 0.0);
  for (int k = 0; k + 1 < nt; ++k)
    if (linked[k]) {
      const double seg = m.trace_y[k + 1] - m.trace_y[k];
      m.trace_w[k] += 0.5 * seg;
      m.trace_w[k + 1] += 0.5 * seg;
    }
  return m;
}

}  // namespace diracwg
