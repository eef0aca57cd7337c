#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include <Eigen/Dense>

#include <diracwg/quadrature.hpp>

using namespace diracwg;

TEST_CASE("segment rule is exact on cubics and fourth order beyond", "[quad][segment]") {
  for (int n : {8, 32, 128}) {
    std::vector<QuadNode> nodes;
    append_segment(nodes, 0.0, 1.0, n);
    const cplx got = quad_sum(nodes, [](cplx p) { return p * p * p; });
    CHECK(std::abs(got - 0.25) <= 1e-15);
  }
  const auto quintic_err = [](int n) {
    std::vector<QuadNode> nodes;
    append_segment(nodes, 0.0, 1.0, n);
    const cplx got = quad_sum(nodes, [](cplx p) { return std::pow(p, 5); });
    return std::abs(got - 1.0 / 6.0);
  };
  const double e8 = quintic_err(8), e16 = quintic_err(16);
  CHECK(e8 <= std::pow(1.0 / 8.0, 4));
  CHECK(e8 / e16 >= 12.0);  // fourth-order decay, with slack
  CHECK(e8 / e16 <= 20.0);
}

TEST_CASE("trapezoid is spectrally accurate on periodic integrands", "[quad][segment]") {
  std::vector<QuadNode> nodes;
  append_segment(nodes, -PI, PI, 64);
  const cplx got = quad_sum(nodes, [](cplx p) { return std::exp(std::cos(p)); });
  const double exact = 2.0 * PI * std::cyl_bessel_i(0.0, 1.0);
  CHECK(std::abs(got - exact) <= 1e-12);
}

TEST_CASE("full-circle rule recovers the residue", "[quad][arc]") {
  const cplx c(0.3, 0.2);
  const cplx pole = c + cplx(0.21, -0.1);  // inside the r = 0.7 circle
  std::vector<QuadNode> nodes;
  append_arc(nodes, c, 0.7, 0.0, 2.0 * PI, 64);
  const cplx got = quad_sum(nodes, [&](cplx z) { return 1.0 / (z - pole); });
  CHECK(std::abs(got - cplx(0, 2.0 * PI)) <= 1e-12);
}

TEST_CASE("detour contour integrates analytic functions path-independently",
          "[quad][contour]") {
  const DetourSpec spec{2.376, 0.165, 64};
  const auto nodes = detour_contour(spec);
  // antiderivative of e^z cos(2z) is e^z (cos 2z + 2 sin 2z)/5
  const auto F = [](cplx z) {
    return std::exp(z) * (std::cos(2.0 * z) + 2.0 * std::sin(2.0 * z)) / 5.0;
  };
  const cplx got = quad_sum(nodes, [](cplx z) { return std::exp(z) * std::cos(2.0 * z); });
  const cplx exact = F(cplx(PI, 0)) - F(cplx(-PI, 0));
  CHECK(std::abs(got - exact) <= 1e-5 * std::abs(exact));
}

TEST_CASE("detour contour takes the advertised sides of the two poles", "[quad][contour]") {
  const double q = 2.376, r = 0.165;
  const DetourSpec spec{q, r, 64};
  const auto nodes = detour_contour(spec);
  // passing above a pole subtracts i pi from the principal value, passing
  // below adds it; the principal values of the pair cancel by symmetry
  const cplx left = quad_sum(nodes, [&](cplx z) { return 1.0 / (z + q); });
  const cplx right = quad_sum(nodes, [&](cplx z) { return 1.0 / (z - q); });
  const cplx pv_left = std::log((PI + q) / (PI - q));
  CHECK(std::abs(left - (pv_left - cplx(0, PI))) <= 2e-4);
  CHECK(std::abs(right - (-pv_left + cplx(0, PI))) <= 2e-4);
  CHECK(std::abs(left + right) <= 1e-9);

  SECTION("node doubling shrinks the defect") {
    const DetourSpec fine{q, r, 128};
    const auto nodes2 = detour_contour(fine);
    const cplx left2 = quad_sum(nodes2, [&](cplx z) { return 1.0 / (z + q); });
    CHECK(std::abs(left2 - (pv_left - cplx(0, PI))) <=
          0.5 * std::abs(left - (pv_left - cplx(0, PI))));
  }
}

TEST_CASE("principal value with a pure pole is excision-exact", "[quad][pv]") {
  const PvRule rule = pv_rule(-1.0, 2.0, {0.0}, 1e-2, 64);
  const cplx got = rule.integrate([](cplx p) { return 1.0 / p; });
  CHECK(std::abs(got - std::log(2.0)) <= 1e-6);
}

TEST_CASE("principal value handles a regular part and extrapolates in tau", "[quad][pv]") {
  // PV of e^x / x over [-1, 1] equals twice the hyperbolic sine integral at 1
  double shi = 0;
  double fact = 1.0;
  for (int k = 0; k <= 9; ++k) {
    const int m = 2 * k + 1;
    // fact = m! built incrementally
    if (k > 0) fact *= double(m - 1) * double(m);
    shi += 1.0 / (m * fact);
  }
  const double exact = 2.0 * shi;
  const PvRule rule = pv_rule(-1.0, 1.0, {0.0}, 1e-2, 64);
  const auto f = [](cplx p) { return std::exp(p) / p; };
  const cplx e0 = quad_sum(rule.nodes[0], f);
  const cplx e1 = quad_sum(rule.nodes[1], f);
  const cplx e2 = quad_sum(rule.nodes[2], f);
  // symmetric excision at radius tau removes 2 tau g(0) + O(tau^3), g = regular part
  CHECK(std::abs(e0 - exact + 2e-2) <= 2e-5);
  CHECK(std::abs(e1 - exact + 1e-2) <= 2e-5);
  const cplx extr = PvRule::extrapolate(e0, e1, e2);
  CHECK(std::abs(extr - exact) <= 5e-5);

  SECTION("node doubling improves the extrapolated value fourth-order") {
    const PvRule fine = pv_rule(-1.0, 1.0, {0.0}, 1e-2, 128);
    const cplx extr2 = fine.integrate(f);
    CHECK(std::abs(extr2 - exact) <= std::abs(extr - exact) / 8.0);
  }
}

TEST_CASE("principal value with two singular momenta", "[quad][pv]") {
  const double a = 0.3, b = -0.5;
  const PvRule rule = pv_rule(-1.0, 1.0, {b, a}, 1e-2, 64);
  const cplx got = rule.integrate([&](cplx p) { return 1.0 / ((p - a) * (p - b)); });
  const double exact =
      (std::log((1 - a) / (1 + a)) - std::log((1 - b) / (1 + b))) / (a - b);
  CHECK(std::abs(got - exact) <= 1e-4);
}

TEST_CASE("weighted sums work on matrix-valued integrands", "[quad][matrix]") {
  std::vector<QuadNode> nodes;
  append_segment(nodes, 0.0, 1.0, 64);
  const auto f = [](cplx p) {
    Eigen::Matrix2cd m;
    m << 1.0, p, p * p, 1.0;
    return m;
  };
  const Eigen::Matrix2cd got = quad_sum(nodes, f);
  CHECK(std::abs(got(0, 0) - 1.0) <= 1e-12);
  CHECK(std::abs(got(0, 1) - 0.5) <= 1e-6);
  CHECK(std::abs(got(1, 0) - cplx(1.0 / 3.0)) <= 1e-4);
  CHECK(std::abs(got(1, 1) - 1.0) <= 1e-12);
}

// ---------------------------------------------------------------------------
// Assembled interface-kernel tests on the shipped cell.  One shared assembly
// serves every case; the variant contours (reflected arcs, half radius,
// doubled nodes) are built lazily by the cases that need them.

#include <optional>

#include <diracwg/band.hpp>
#include <diracwg/config.hpp>
#include <diracwg/forms.hpp>
#include <diracwg/greens.hpp>
#include <diracwg/mesh.hpp>
#include <diracwg/pencil.hpp>
#include <diracwg/perturb.hpp>
#include <diracwg/trace.hpp>

namespace {

struct GreensLab {
  Config cfg;
  Mesh mesh;
  AssembledForms F;
  DiracPoint dp;
  CouplingData cd;
  TraceOps T;
  double eps = 0;
  cplx lam;  // probe frequency strictly inside the gap window
  std::optional<SpectralCache> cache;
  ContinuedOperator op;
  DetourParams prm;
};

GreensLab& glab() {
  static GreensLab* g = [] {
    auto* L = new GreensLab;
    L->cfg = load_config(std::string(DIRACWG_CONFIG_DIR) + "/default.cfg");
    L->mesh = build_mesh(L->cfg.geometry, L->cfg.target_h);
    L->F = assemble_forms(L->mesh, base_field(L->cfg), direction_field(L->cfg));
    L->dp = find_dirac(L->F, L->cfg);
    L->cd = compute_coupling(L->dp, L->F);
    L->T = make_trace_ops(L->mesh);
    L->eps = std::abs(L->cd.t_star) * L->cfg.eps;
    L->lam = L->dp.lambda_star + L->eps * 0.2 * std::abs(L->cd.t_star);
    L->cache.emplace(L->F, L->eps);
    L->prm.radius = std::cbrt(L->eps) * L->cfg.arc_radius_factor;
    L->prm.nodes_per_pi = L->cfg.nodes_per_pi;
    L->op = assemble_continued_operator(*L->cache, L->dp, L->T, L->prm);
    return L;
  }();
  return *g;
}

const ContinuedOperator& op_half_radius() {
  static const ContinuedOperator o = [] {
    GreensLab& L = glab();
    DetourParams p = L.prm;
    p.radius *= 0.5;
    return assemble_continued_operator(*L.cache, L.dp, L.T, p);
  }();
  return o;
}

const ContinuedOperator& op_doubled() {
  static const ContinuedOperator o = [] {
    GreensLab& L = glab();
    DetourParams p = L.prm;
    p.nodes_per_pi *= 2;
    return assemble_continued_operator(*L.cache, L.dp, L.T, p);
  }();
  return o;
}

const ContinuedOperator& op_reflected() {
  static const ContinuedOperator o = [] {
    GreensLab& L = glab();
    DetourParams p = L.prm;
    p.reflect = true;
    return assemble_continued_operator(*L.cache, L.dp, L.T, p);
  }();
  return o;
}

Eigen::VectorXcd smooth_density() {
  GreensLab& L = glab();
  Eigen::VectorXcd phi(L.T.nt);
  for (int t = 0; t < L.T.nt; ++t)
    phi[t] = std::cos(2.0 * PI * L.T.y[t] / L.cfg.geometry.height) + 0.3;
  return phi;
}

}  // namespace

TEST_CASE("continued operator assembles with certified arcs", "[greens][assembly]") {
  GreensLab& L = glab();
  CHECK(L.op.real_nodes.size() >= 100);
  CHECK(L.op.arc_nodes.size() >= 32);
  // node-to-node continuation along the arcs never loses the tracked band
  CHECK(L.op.min_step_overlap >= 0.999);
  // fresh eigensolve at the arc exits agrees with the walked continuation
  CHECK(L.op.max_exit_level <= 1e-10);
  CHECK(L.op.max_exit_mismatch <= 1e-8);
  // recorded baseline of the shipped configuration
  CHECK(std::abs(L.dp.lambda_star - 4.52625313103) <= 1e-6);
  CHECK(std::abs(L.eps - 0.0045) <= 1e-6);
  CHECK(std::abs(L.op.kernel(L.lam).norm() - 4.76312) <= 2e-3);
}

TEST_CASE("shifted kernels transpose across the interface", "[greens][symmetry]") {
  GreensLab& L = glab();
  for (int k : {1, 2}) {
    const Eigen::MatrixXcd Kp = L.op.kernel(L.lam, k);
    const Eigen::MatrixXcd Km = L.op.kernel(L.lam, -k);
    CHECK((Kp - Km.transpose()).norm() / Kp.norm() <= 1e-10);
  }
  const Eigen::MatrixXcd K0 = L.op.kernel(L.lam);
  CHECK((K0 - K0.transpose()).norm() / K0.norm() <= 1e-10);
}

TEST_CASE("kernel is analytic in frequency and path-independent", "[greens][analytic]") {
  GreensLab& L = glab();

  SECTION("conjugate frequency on the reflected contour is the plain conjugate") {
    const cplx lamc = L.lam - cplx(0, 5e-4);
    for (int k : {0, 1, 2}) {
      const Eigen::MatrixXcd a = op_reflected().kernel(std::conj(lamc), k);
      const Eigen::MatrixXcd b = L.op.kernel(lamc, k).conjugate();
      CHECK((a - b).norm() / b.norm() <= 1e-10);
    }
  }

  SECTION("mean over a small frequency circle returns the center value") {
    const double rho = 1e-4;
    const Eigen::MatrixXcd center = L.op.kernel(L.lam);
    Eigen::MatrixXcd mean = Eigen::MatrixXcd::Zero(L.op.nt, L.op.nt);
    const int n = 8;
    for (int j = 0; j < n; ++j) {
      const double th = 2.0 * PI * j / n;
      mean += L.op.kernel(L.lam + rho * std::exp(cplx(0, th)));
    }
    mean /= double(n);
    CHECK((mean - center).norm() / center.norm() <= 1e-8);
  }

  SECTION("halving the arc radius moves the kernel only by the quadrature floor") {
    for (int k : {0, 1, 2}) {
      const Eigen::MatrixXcd a = op_half_radius().kernel(L.lam, k);
      const Eigen::MatrixXcd b = L.op.kernel(L.lam, k);
      CHECK((a - b).norm() / b.norm() <= 2e-4);
    }
  }

  SECTION("assembled paths integrate an entire function exactly") {
    // antiderivative of e^{0.3 i p} (p^2 + 1)
    const auto antider = [](cplx p) {
      const cplx a(0, 0.3);
      return std::exp(a * p) * ((p * p + 1.0) / a - 2.0 * p / (a * a) + 2.0 / (a * a * a));
    };
    const cplx exact = antider(cplx(PI)) - antider(cplx(-PI));
    const auto entire = [](cplx p) { return std::exp(cplx(0, 0.3) * p) * (p * p + 1.0); };
    auto path_sum = [&](const ContinuedOperator& o, bool branch) {
      cplx s = 0;
      for (const auto& rn : o.real_nodes) s += (branch ? rn.w_branch : rn.w_rest) * entire(cplx(rn.p));
      if (branch)
        for (const auto& an : o.arc_nodes) s += an.w * entire(an.p);
      return s;
    };
    CHECK(std::abs(path_sum(L.op, true) - exact) <= 2e-4);
    CHECK(std::abs(path_sum(L.op, false) - exact) <= 2e-4);
    CHECK(std::abs(path_sum(op_half_radius(), true) - exact) <= 2e-4);
    // fourth-order contraction under node doubling
    CHECK(std::abs(path_sum(op_doubled(), true) - exact) <=
          std::abs(path_sum(L.op, true) - exact) / 8.0);
  }

  SECTION("node spectra reproduce the resolvent at sampled momenta") {
    const Eigen::MatrixXcd Mc = L.F.mass(L.eps).cast<cplx>();
    for (size_t pick : {L.op.real_nodes.size() / 5, L.op.real_nodes.size() / 2,
                        4 * L.op.real_nodes.size() / 5}) {
      const auto& rn = L.op.real_nodes[pick];
      const int nb = int(rn.ns.lambda.size());
      Eigen::VectorXcd c(nb);
      for (int n = 0; n < nb; ++n) c[n] = 1.0 / (L.lam - rn.ns.lambda[n]);
      const Eigen::MatrixXcd spec = rn.ns.RV * c.asDiagonal() * rn.ns.WR;
      const Eigen::MatrixXcd X =
          Eigen::MatrixXcd(L.lam * Mc - L.F.bloch_A(cplx(rn.p))).inverse();
      Eigen::MatrixXcd Xtr(L.op.nt, L.op.nt);
      for (int a = 0; a < L.op.nt; ++a)
        for (int b = 0; b < L.op.nt; ++b)
          Xtr(a, b) = X(L.mesh.trace_dofs[a], L.mesh.trace_dofs[b]);
      CHECK((spec - Xtr).norm() / Xtr.norm() <= 1e-8);
    }
  }
}

TEST_CASE("node doubling contracts the kernel self-defect", "[greens][convergence]") {
  GreensLab& L = glab();
  for (int k : {0, 1}) {
    const Eigen::MatrixXcd a = op_doubled().kernel(L.lam, k);
    const Eigen::MatrixXcd b = L.op.kernel(L.lam, k);
    CHECK((a - b).norm() / b.norm() <= 1e-4);
  }
}

TEST_CASE("complex momentum roots are mirror-paired and certified", "[greens][roots]") {
  GreensLab& L = glab();
  const ComplexMomentumRoot root = find_complex_roots(L.F, L.eps, L.dp, L.lam);
  CHECK(std::abs(root.q_plus.real() - 2.37633521) <= 1e-5);
  CHECK(std::abs(root.q_plus.imag()) <= 1e-10);  // real frequency in the window: real root
  CHECK(root.branch_certificate <= 1e-10);
  CHECK(root.mirror_residual <= 1e-10);
  CHECK(root.newton_residuals.size() <= 12);
  CHECK(root.newton_residuals.back() <= 1e-12);

  SECTION("lowering the frequency into the lower half plane pulls the root down") {
    const ComplexMomentumRoot r2 = find_complex_roots(L.F, L.eps, L.dp, L.lam - cplx(0, 5e-4));
    CHECK(r2.q_plus.imag() < 0.0);
    CHECK(r2.q_plus.imag() >= -1.1e-3);
    CHECK(r2.q_plus.imag() <= -0.9e-3);
    CHECK(r2.branch_certificate <= 1e-10);
  }
}

TEST_CASE("detoured integral equals principal value plus half residues",
          "[greens][residue]") {
  GreensLab& L = glab();
  const ResidueIdentityReport r = residue_identity_check(*L.cache, L.op, L.lam.real(),
                                                         L.cfg.pv_tau, L.cfg.nodes_per_pi);
  CHECK(r.rel_defect <= 1e-4);
  CHECK(r.slope_sym_defect <= 1e-8);
  // dropping the half-residue dyads leaves exactly their norm behind
  const double jump = (r.contour_part - r.pv_part).norm();
  CHECK(r.drop_residue_defect >= 0.3);
  CHECK(std::abs(jump - r.residue_part.norm()) <= 1e-3 * r.contour_part.norm());

  SECTION("defect decreases under node doubling") {
    const ResidueIdentityReport r2 = residue_identity_check(
        *L.cache, op_doubled(), L.lam.real(), L.cfg.pv_tau, 2 * L.cfg.nodes_per_pi);
    CHECK(r2.rel_defect <= 2e-6);
    CHECK(r2.rel_defect < 0.25 * r.rel_defect);
  }

  SECTION("defect is stable under halving the excision width") {
    const ResidueIdentityReport r3 = residue_identity_check(
        *L.cache, L.op, L.lam.real(), 0.5 * L.cfg.pv_tau, L.cfg.nodes_per_pi);
    CHECK(r3.rel_defect <= 1e-4);
  }
}

TEST_CASE("radiation split recovers amplitude, slow pole, and rates",
          "[greens][radiation]") {
  GreensLab& L = glab();
  const ComplexMomentumRoot root = find_complex_roots(L.F, L.eps, L.dp, L.lam);

  SECTION("smooth density") {
    const RadiationReport rep = radiation_split(*L.cache, L.op, root, smooth_density());
    CHECK(rep.amp_rel_defect <= 5e-3);
    CHECK(rep.slow_oracle_defect <= 1e-10);
    CHECK(std::abs(rep.evan_rate_oracle - rep.slow_momentum.imag()) <= 1e-10);
    CHECK(rep.slow_momentum.imag() > 0.0);
    CHECK(rep.slow_momentum.imag() <= 2.5 * L.eps);  // gap-edge pole sits at scale eps
    // removing the propagating wave leaves the slow pole: the two-pole model
    // explains the far cells down to the quadrature floor
    REQUIRE(rep.resid_norms.size() >= 8);
    for (int k = 2; k <= 8; ++k)
      CHECK(rep.clean_norms[k - 1] <= 0.1 * rep.resid_norms[k - 1]);
    CHECK(std::abs(rep.prop_rate_fit) <= 1e-3);  // no growth at real frequency
    CHECK(std::abs(rep.evan_rate_fit - rep.evan_rate_oracle) <= 1e-3);
  }

  SECTION("single-node density") {
    GreensLab& LL = glab();
    Eigen::VectorXcd phi = Eigen::VectorXcd::Zero(LL.T.nt);
    phi[LL.T.nt / 2] = 1.0;
    const RadiationReport rep = radiation_split(*LL.cache, LL.op, root, phi);
    CHECK(rep.amp_rel_defect <= 5e-3);
    CHECK(rep.slow_oracle_defect <= 1e-10);
    for (int k = 2; k <= 8; ++k)
      CHECK(rep.clean_norms[k - 1] <= 0.15 * rep.resid_norms[k - 1]);
    CHECK(std::abs(rep.evan_rate_fit - rep.evan_rate_oracle) <= 1e-3);
  }

  SECTION("density orthogonal to the radiating trace excites no wave") {
    Eigen::VectorXcd phi = smooth_density();
    Eigen::VectorXcd w_tr(L.op.nt);
    const auto& tr = L.mesh.trace_dofs;
    for (int t = 0; t < L.op.nt; ++t) w_tr[t] = root.w_plus[tr[t]];
    // remove the radiating component in the amplitude pairing
    const Eigen::VectorXcd dir = w_tr.conjugate();
    const auto pair_w = [&](const Eigen::VectorXcd& f) {
      return bilinear(w_tr, Eigen::VectorXcd(L.op.trace_w.asDiagonal() * f));
    };
    phi -= (pair_w(phi) / pair_w(dir)) * dir;
    const RadiationReport rep = radiation_split(*L.cache, L.op, root, phi);
    CHECK(std::abs(rep.amp_formula) <= 1e-12 * phi.norm());
    CHECK(std::abs(rep.amp_fit) <= 1e-3 * phi.norm());
    // without the propagating wave the far field only decays
    for (int k = 3; k <= 8; ++k)
      CHECK(rep.resid_norms[k - 1] <= 1.05 * rep.resid_norms[k - 2]);
  }

  SECTION("lower-half-plane frequency grows at the root rate") {
    const cplx lam2 = L.lam - cplx(0, 5e-4);
    const ComplexMomentumRoot r2 = find_complex_roots(L.F, L.eps, L.dp, lam2);
    const RadiationReport rep = radiation_split(*L.cache, L.op, r2, smooth_density());
    CHECK(rep.prop_rate_expected > 0.0);
    CHECK(std::abs(rep.prop_rate_fit - rep.prop_rate_expected) <=
          0.15 * rep.prop_rate_expected);
    CHECK(rep.amp_rel_defect <= 5e-3);
  }
}

TEST_CASE("half-space field is mirror even and jumps by the density",
          "[greens][field]") {
  GreensLab& L = glab();
  const Eigen::VectorXcd phi = smooth_density();
  const auto vf = volume_field(*L.cache, L.op, L.lam, phi, -2, 2);
  auto rel = [](const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    return (a - b).norm() / b.norm();
  };
  CHECK(rel(apply_mirror(L.mesh, vf[2]), vf[2]) <= 1e-10);
  CHECK(rel(apply_mirror(L.mesh, vf[1]), vf[3]) <= 1e-10);
  CHECK(rel(apply_mirror(L.mesh, vf[0]), vf[4]) <= 1e-10);

  // one-sided x-derivative on the line recovers half the density, to the
  // mesh truncation of the kinked field
  const Eigen::VectorXcd d = one_sided_normal_derivative(*L.cache, L.op, L.lam, phi);
  const Eigen::VectorXcd half = 0.5 * phi;
  CHECK((d - half).norm() / half.norm() <= 0.15);
  CHECK((d + half).norm() / half.norm() >= 1.0);  // the sign is not ambiguous
}

TEST_CASE("endpoint tail matches finite differences at the period edge",
          "[greens][tail]") {
  GreensLab& L = glab();
  const auto& t = L.op.endpoint_tail(L.lam);
  const Eigen::MatrixXcd Mc = L.F.mass(L.eps).cast<cplx>();
  const auto Gtr = [&](double p) {
    const Eigen::MatrixXcd X =
        Eigen::MatrixXcd(L.lam * Mc - L.F.bloch_A(cplx(p))).inverse();
    Eigen::MatrixXcd out(L.op.nt, L.op.nt);
    for (int a = 0; a < L.op.nt; ++a)
      for (int b = 0; b < L.op.nt; ++b)
        out(a, b) = X(L.mesh.trace_dofs[a], L.mesh.trace_dofs[b]);
    return out;
  };
  const double del = 1e-2;
  const Eigen::MatrixXcd gp1 = Gtr(PI + del), gm1 = Gtr(PI - del);
  const Eigen::MatrixXcd gp2 = Gtr(PI + 2 * del), gm2 = Gtr(PI - 2 * del);
  const Eigen::MatrixXcd g1_fd = (gp1 - gm1) / (2 * del);
  const Eigen::MatrixXcd g3_fd = (gp2 - 2.0 * gp1 + 2.0 * gm1 - gm2) / (2 * del * del * del);
  CHECK((t.g1 - g1_fd).norm() / g1_fd.norm() <= 5e-3);
  CHECK((t.g3 - g3_fd).norm() / g3_fd.norm() <= 1e-2);
  // the integrand value itself is even across the period edge
  CHECK((Gtr(PI) - Gtr(-PI)).norm() / Gtr(PI).norm() <= 1e-10);
}
