#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include <diracwg/band.hpp>
#include <diracwg/config.hpp>
#include <diracwg/forms.hpp>
#include <diracwg/mesh.hpp>
#include <diracwg/pencil.hpp>
#include <diracwg/perturb.hpp>

using namespace diracwg;

namespace {

struct Lab {
  Config cfg;
  Mesh mesh;
  AssembledForms F;
  DiracPoint dp;
  CouplingData cd;
};

const Lab& lab() {
  static const Lab L = [] {
    Config cfg = load_config(std::string(DIRACWG_CONFIG_DIR) + "/default.cfg");
    Mesh mesh = build_mesh(cfg.geometry, cfg.target_h);
    calibrate_degeneracy(cfg, mesh);
    AssembledForms F = assemble_forms(mesh, base_field(cfg), direction_field(cfg));
    DiracPoint dp = find_dirac(F, cfg);
    CouplingData cd = compute_coupling(dp, F);
    return Lab{std::move(cfg), std::move(mesh), std::move(F), std::move(dp), std::move(cd)};
  }();
  return L;
}

}  // namespace

TEST_CASE("crossing-point data matches the recorded baseline", "[perturb][baseline]") {
  const Lab& L = lab();
  CHECK(L.dp.lo == 2);
  CHECK(L.dp.hi == 3);
  CHECK(std::abs(L.dp.lambda_star - 4.52625313103) <= 1e-6);
  CHECK(std::abs(L.dp.alpha - 1.23545996332) <= 1e-6);
  CHECK(std::abs(L.dp.q_star - 2.37619263885) <= 1e-5);
  CHECK(L.dp.mu_prime_fold < 0.0);
  CHECK(L.dp.margin_other >= 0.5);
  CHECK(L.dp.gap_p0 <= 1e-6 * L.dp.lambda_star);
}

TEST_CASE("coupling integrals behave as matrix elements", "[perturb][coupling]") {
  const Lab& L = lab();

  SECTION("shipped direction: |t*| at its designed value, diagonals nulled") {
    CHECK(std::abs(L.cd.t_star - cplx(0.45, 0.0)) <= 1e-6);
    CHECK(std::abs(L.cd.diag_n) <= 1e-10);
    CHECK(std::abs(L.cd.diag_m) <= 1e-10);
    CHECK(L.cd.relaxed_condition_margin >= 0.8);
    // t* is real for the mirror-even direction in the trace-positive gauge
    CHECK(std::abs(L.cd.t_star.imag()) <= 1e-12);
  }

  SECTION("zero direction gives zero integrals") {
    Config c2 = L.cfg;
    c2.direction.terms.clear();
    IndexTerm t;
    t.kind = IndexTerm::Constant;
    t.value = 0.0;
    c2.direction.terms.push_back(t);
    const AssembledForms F2 = assemble_forms(L.mesh, base_field(c2), direction_field(c2));
    const CouplingData cd = compute_coupling(L.dp, F2);
    CHECK(std::abs(cd.t_star) == 0.0);
    CHECK(std::abs(cd.diag_n) == 0.0);
    CHECK(std::abs(cd.diag_m) == 0.0);
  }

  SECTION("mirror-antisymmetric direction nulls the diagonals exactly") {
    Config c2 = L.cfg;
    c2.direction.terms.clear();
    IndexTerm b1;
    b1.kind = IndexTerm::Box;
    b1.x0 = 0.15; b1.x1 = 0.35; b1.y0 = 0.1; b1.y1 = 0.4; b1.value = 1.0;
    IndexTerm b2 = b1;
    b2.x0 = 0.65; b2.x1 = 0.85; b2.value = -1.0;
    c2.direction.terms.push_back(b1);
    c2.direction.terms.push_back(b2);
    const AssembledForms F2 = assemble_forms(L.mesh, base_field(c2), direction_field(c2));
    const CouplingData cd = compute_coupling(L.dp, F2);
    const double scale = std::abs(L.dp.lambda_star);
    CHECK(std::abs(cd.diag_n) <= 1e-12 * scale);
    CHECK(std::abs(cd.diag_m) <= 1e-12 * scale);
  }

  SECTION("|t*| is invariant under the unimodular phase freedom") {
    DiracPoint dp2 = L.dp;
    const cplx phase = std::polar(1.0, 0.7318);
    dp2.v_plus = phase * L.dp.v_plus;
    for (int d = 0; d < dp2.v_plus.size(); ++d)
      dp2.v_minus[L.mesh.mirror_dof[d]] = dp2.v_plus[d];
    const CouplingData cd = compute_coupling(dp2, L.F);
    CHECK(std::abs(std::abs(cd.t_star) - std::abs(L.cd.t_star)) <=
          1e-10 * std::abs(L.cd.t_star));
  }
}

TEST_CASE("reduced two-level model has the advertised structure", "[perturb][reduced]") {
  const Lab& L = lab();

  SECTION("matrix entries and Hermiticity at leading order") {
    const ReducedMatrix R = reduced_matrix(L.cd, L.dp, 1e-2, 0.3, cplx(0.1, 0.0));
    CHECK(R.M11 == cplx(0.1 - L.dp.alpha * 0.3, 0.0));
    CHECK(R.M22 == cplx(0.1 + L.dp.alpha * 0.3, 0.0));
    CHECK(R.M12 == std::conj(R.M21));
  }

  SECTION("model dispersion endpoints") {
    const auto [l0, u0] = reduced_dispersion(L.cd, L.dp, 0.0, 0.0);
    CHECK(l0 == L.dp.lambda_star);
    CHECK(u0 == L.dp.lambda_star);
    const auto [le, ue] = reduced_dispersion(L.cd, L.dp, 1e-3, 0.0);
    CHECK(std::abs(ue - le - 2.0 * std::abs(L.cd.t_star) * 1e-3) <= 1e-15);
    const auto [lp, up] = reduced_dispersion(L.cd, L.dp, 0.0, 2e-3);
    CHECK(std::abs(up - lp - 2.0 * L.dp.alpha * 2e-3) <= 1e-15);
  }
}

TEST_CASE("opened gap follows the two-level law", "[perturb][gap]") {
  const Lab& L = lab();
  std::vector<double> eps_list = {1e-2, 3.16e-3, 1e-3, 3.16e-4, 1e-4};
  std::vector<double> p_list = {0.0};
  const double pmax = 5.0 * std::abs(L.cd.t_star) * 1e-3 / L.dp.alpha;
  for (int k = 1; k <= 4; ++k) p_list.push_back(pmax * k / 4.0);
  const GapCheckReport rep = gap_asymptotics_check(L.F, L.dp, L.cd, eps_list, p_list);

  CHECK(std::abs(rep.gap_ratio_1e2 - 1.0) <= 5e-3);
  CHECK(std::abs(rep.gap_ratio_1e3 - 1.0) <= 5e-4);
  // level defects (not gap defects) retain the common quadratic shift, so the
  // relative defect at the largest scale eps = 1e-2 sits near 2 * scale
  CHECK(rep.worst_rel_defect <= 0.05);
  CHECK(rep.fitted_order >= 0.9);

  SECTION("deviation shrinks linearly in eps") {
    const double d2 = std::abs(rep.gap_ratio_1e2 - 1.0);
    const double d3 = std::abs(rep.gap_ratio_1e3 - 1.0);
    CHECK(d2 / d3 >= 4.0);
    CHECK(d2 / d3 <= 25.0);
  }

  SECTION("gap is even in eps") {
    const Eigen::MatrixXd Mp = L.F.mass(1e-3);
    const Eigen::MatrixXd Mm = L.F.mass(-1e-3);
    const HermitianBasis hp = solve_hermitian_pencil(L.F.bloch_A(0.0), Mp);
    const HermitianBasis hm = solve_hermitian_pencil(L.F.bloch_A(0.0), Mm);
    const double gp = hp.lambda[L.dp.hi] - hp.lambda[L.dp.lo];
    const double gm = hm.lambda[L.dp.hi] - hm.lambda[L.dp.lo];
    CHECK(std::abs(gp - gm) <= 5e-4 * gp);
  }
}

TEST_CASE("eigenvectors follow the predicted combinations", "[perturb][eigvec]") {
  const Lab& L = lab();
  const double eps = 1e-3;
  const double pref = std::abs(L.cd.t_star) * eps / L.dp.alpha;

  SECTION("angles stay linear in the expansion scale") {
    for (double pfac : {0.0, 0.5, 1.0, 2.0}) {
      const EigvecCheckRow row =
          eigenfunction_asymptotics_check(L.F, L.dp, L.cd, eps, pfac * pref);
      INFO("p = " << pfac * pref);
      CHECK(row.angle_lower <= 5e-3);
      CHECK(row.angle_upper <= 5e-3);
    }
  }

  SECTION("floor at ten-times-smaller eps is ten times smaller") {
    const EigvecCheckRow a = eigenfunction_asymptotics_check(L.F, L.dp, L.cd, 1e-3, 0.0);
    const EigvecCheckRow b = eigenfunction_asymptotics_check(L.F, L.dp, L.cd, 1e-4, 0.0);
    CHECK(a.angle_lower / b.angle_lower >= 5.0);
    CHECK(a.angle_lower / b.angle_lower <= 20.0);
  }

  SECTION("mirror symmetry of the angles in p") {
    const EigvecCheckRow rp = eigenfunction_asymptotics_check(L.F, L.dp, L.cd, eps, pref);
    const EigvecCheckRow rm = eigenfunction_asymptotics_check(L.F, L.dp, L.cd, eps, -pref);
    CHECK(std::abs(rp.angle_lower - rm.angle_lower) <= 1e-6);
    CHECK(std::abs(rp.angle_upper - rm.angle_upper) <= 1e-6);
  }

  SECTION("far side of the cone aligns with a single basis vector") {
    // alpha p = 20 |t*| eps: lower band is predominantly v_minus
    const double p = 20.0 * pref;
    const Eigen::MatrixXd Me = L.F.mass(eps);
    const HermitianBasis hb = solve_hermitian_pencil(L.F.bloch_A(p), Me);
    const double ang = m_angle(hb.V.col(L.dp.lo), L.dp.v_minus, Me);
    CHECK(ang <= 0.1);
  }
}

TEST_CASE("fold expansion stays within a linear envelope", "[perturb][fold]") {
  const Lab& L = lab();
  const FoldCheckReport rep = fold_asymptotics_check(L.F, L.dp, 1e-3);
  REQUIRE(rep.rows.size() == 10);
  // the linear constants are set by the fold slope (~0.5); record a band
  CHECK(rep.fitted_linear_bound >= 0.1);
  CHECK(rep.fitted_linear_bound <= 1.5);
  CHECK(rep.fitted_slope_bound <= 5.0);
  for (const FoldCheckRow& r : rep.rows) {
    CHECK(r.level_defect <= 1.5 * r.scale);
    CHECK(r.vec_angle <= 0.2);
  }
  SECTION("defect vanishes at the crossing itself when eps = 0") {
    const FoldCheckReport rz = fold_asymptotics_check(L.F, L.dp, 0.0);
    for (const FoldCheckRow& r : rz.rows)
      if (r.p == L.dp.q_star || r.p == -L.dp.q_star)
        CHECK(r.level_defect <= 1e-8);
  }
}
