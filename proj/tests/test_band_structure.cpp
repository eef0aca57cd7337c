#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <diracwg/band.hpp>
#include <diracwg/config.hpp>
#include <diracwg/forms.hpp>
#include <diracwg/mesh.hpp>
#include <diracwg/pencil.hpp>
#include <diracwg/trace.hpp>

using namespace diracwg;

namespace {

struct Lab {
  Config cfg;
  Mesh mesh;
  AssembledForms F;
  DiracPoint dp;
};

Lab make_lab(double target_h) {
  Config cfg = load_config(std::string(DIRACWG_CONFIG_DIR) + "/default.cfg");
  cfg.target_h = target_h;
  Mesh mesh = build_mesh(cfg.geometry, cfg.target_h);
  calibrate_degeneracy(cfg, mesh);
  AssembledForms F = assemble_forms(mesh, base_field(cfg), direction_field(cfg));
  DiracPoint dp = find_dirac(F, cfg);
  return Lab{std::move(cfg), std::move(mesh), std::move(F), std::move(dp)};
}

const Lab& lab() {
  static const Lab L = make_lab(0.05);
  return L;
}

/// Eigenvector of the band nearest `target` at momentum p, its level and slope.
struct BandSample {
  double lambda = 0, slope = 0;
  Eigen::VectorXcd v;
};

BandSample sample_band(const AssembledForms& F, const Eigen::MatrixXd& M, double p,
                       double target) {
  const HermitianBasis hb = solve_hermitian_pencil(F.bloch_A(p), M);
  int b = 0;
  double best = std::abs(hb.lambda[0] - target);
  for (int i = 1; i < hb.lambda.size(); ++i) {
    const double d = std::abs(hb.lambda[i] - target);
    if (d < best) { best = d; b = i; }
  }
  BandSample s;
  s.lambda = hb.lambda[b];
  s.v = hb.V.col(b);
  s.slope = group_velocity(F, M, p, s.v);
  return s;
}

/// Worst defect of the six flux identities on one mesh resolution.
struct FluxDefects {
  double diag = 0;   ///< max | q(v,v) - (i/2) slope | over the four diagonal cases
  double cross = 0;  ///< max |q| over the four cross pairings
  double h = 0;
};

FluxDefects flux_defects(const Lab& L) {
  const TraceOps T = make_trace_ops(L.mesh);
  const Eigen::MatrixXd M = L.F.mass(0.0);
  const double q = L.dp.q_star;
  const BandSample fold_n = sample_band(L.F, M, -q, L.dp.lambda_star);
  const BandSample fold_m = sample_band(L.F, M, +q, L.dp.lambda_star);

  FluxDefects d;
  d.h = L.mesh.max_diameter;
  const auto diag = [&](double p, const Eigen::VectorXcd& v, double slope) {
    d.diag = std::max(d.diag, std::abs(flux_form(T, p, v, v) - cplx(0, 0.5 * slope)));
  };
  diag(0.0, L.dp.v_plus, L.dp.alpha);
  diag(0.0, L.dp.v_minus, -L.dp.alpha);
  diag(-q, fold_n.v, fold_n.slope);
  diag(+q, fold_m.v, fold_m.slope);

  const auto cross = [&](double p, const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) {
    d.cross = std::max(d.cross, std::abs(flux_form(T, p, u, v)));
  };
  cross(0.0, L.dp.v_plus, fold_n.v);
  cross(0.0, L.dp.v_plus, fold_m.v);
  cross(0.0, L.dp.v_minus, fold_m.v);
  cross(0.0, L.dp.v_minus, fold_n.v);
  return d;
}

}  // namespace

TEST_CASE("band functions are even in momentum", "[band][symmetry]") {
  const Lab& L = lab();
  const Eigen::MatrixXd M = L.F.mass(0.0);
  for (double p : {0.3, 1.1, 2.37, 3.0}) {
    const HermitianBasis a = solve_hermitian_pencil(L.F.bloch_A(p), M);
    const HermitianBasis b = solve_hermitian_pencil(L.F.bloch_A(-p), M);
    for (int i = 0; i < L.cfg.n_bands; ++i) {
      INFO("p = " << p << ", band " << i);
      CHECK(std::abs(a.lambda[i] - b.lambda[i]) <= 1e-8 * (1.0 + std::abs(a.lambda[i])));
    }
  }
}

TEST_CASE("group velocity matches a centered difference", "[band][velocity]") {
  const Lab& L = lab();
  const Eigen::MatrixXd M = L.F.mass(0.0);
  const double dp = 1e-4;
  for (double p : {0.3, 0.7, 1.9}) {
    const HermitianBasis hb = solve_hermitian_pencil(L.F.bloch_A(p), M);
    const HermitianBasis hl = solve_hermitian_pencil(L.F.bloch_A(p - dp), M);
    const HermitianBasis hr = solve_hermitian_pencil(L.F.bloch_A(p + dp), M);
    int tested = 0;
    for (int b = 0; b < 8; ++b) {
      const double gap_lo = b == 0 ? 1.0 : hb.lambda[b] - hb.lambda[b - 1];
      const double gap_hi = hb.lambda[b + 1] - hb.lambda[b];
      if (std::min(gap_lo, gap_hi) < 1e-2) continue;  // skip near-degeneracies
      const double hf = group_velocity(L.F, M, p, hb.V.col(b));
      const double fd = (hr.lambda[b] - hl.lambda[b]) / (2.0 * dp);
      INFO("p = " << p << ", band " << b << ": hf = " << hf << ", fd = " << fd);
      CHECK(std::abs(hf - fd) <= 1e-6 * std::max(1.0, std::abs(hf)));
      ++tested;
    }
    CHECK(tested >= 4);
  }
}

TEST_CASE("line fluxes reproduce the band slopes", "[band][flux]") {
  const Lab& coarse = lab();
  const FluxDefects d1 = flux_defects(coarse);
  INFO("diag defect " << d1.diag << ", cross defect " << d1.cross << " at h " << d1.h);
  CHECK(d1.diag <= 0.01);
  CHECK(d1.cross <= 5e-3);

  SECTION("defects shrink under refinement at first order or better") {
    const Lab fine = make_lab(0.035);
    const FluxDefects d2 = flux_defects(fine);
    INFO("fine diag " << d2.diag << ", fine cross " << d2.cross << " at h " << d2.h);
    const double lg = std::log(d1.h / d2.h);
    if (d2.diag > 1e-12) CHECK(std::log(d1.diag / d2.diag) / lg >= 0.9);
    if (d2.cross > 1e-12) CHECK(std::log(d1.cross / d2.cross) / lg >= 0.9);
  }
}

TEST_CASE("fold slopes agree with the mirror image", "[band][fold]") {
  const Lab& L = lab();
  const Eigen::MatrixXd M = L.F.mass(0.0);
  const BandSample fn = sample_band(L.F, M, -L.dp.q_star, L.dp.lambda_star);
  const BandSample fm = sample_band(L.F, M, +L.dp.q_star, L.dp.lambda_star);
  CHECK(std::abs(fn.slope - L.dp.mu_prime_fold) <= 1e-8);
  CHECK(std::abs(fm.slope + L.dp.mu_prime_fold) <= 1e-8);
  CHECK(std::abs(fn.lambda - L.dp.lambda_star) <= 1e-7);
  CHECK(std::abs(fm.lambda - L.dp.lambda_star) <= 1e-7);
}

TEST_CASE("complex momentum spectra pair into conjugates", "[band][complex]") {
  const Lab& L = lab();
  const Eigen::MatrixXd M = L.F.mass(0.0);
  const Eigen::LLT<Eigen::MatrixXd> llt(M);
  const cplx p(0.8, 0.25);
  const ComplexBasis a = solve_complex_pencil(L.F.bloch_A(p), llt);
  const ComplexBasis b = solve_complex_pencil(L.F.bloch_A(std::conj(p)), llt);
  std::vector<cplx> la(a.lambda.data(), a.lambda.data() + a.lambda.size());
  std::vector<cplx> lb(b.lambda.data(), b.lambda.data() + b.lambda.size());
  const auto key = [](const cplx& x, const cplx& y) {
    return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
  };
  std::sort(la.begin(), la.end(), key);
  for (auto& z : lb) z = std::conj(z);
  std::sort(lb.begin(), lb.end(), key);
  for (int i = 0; i < 10; ++i) {
    INFO("eigenvalue " << i);
    CHECK(std::abs(la[i] - lb[i]) <= 1e-8 * (1.0 + std::abs(la[i])));
  }
}

TEST_CASE("degeneracy calibration is reproducible", "[band][determinism]") {
  Config c1 = load_config(std::string(DIRACWG_CONFIG_DIR) + "/default.cfg");
  Config c2 = load_config(std::string(DIRACWG_CONFIG_DIR) + "/default.cfg");
  const Mesh mesh = build_mesh(c1.geometry, c1.target_h);
  const CalibrationResult r1 = calibrate_degeneracy(c1, mesh);
  const CalibrationResult r2 = calibrate_degeneracy(c2, mesh);
  CHECK(r1.value == r2.value);
  CHECK(r1.gap == r2.gap);
  CHECK(r1.evaluations == r2.evaluations);
  CHECK(r1.gap <= c1.degeneracy_rtol * 4.5);
}

TEST_CASE("crossing location is stable under refinement", "[band][refine]") {
  const Lab& L = lab();
  const Lab fine = make_lab(0.035);
  CHECK(std::abs(fine.dp.lambda_star - 4.50710733666) <= 1e-6);
  CHECK(std::abs(fine.dp.alpha - 1.23315379927) <= 1e-6);
  CHECK(std::abs(fine.dp.q_star - 2.363103479) <= 1e-5);
  CHECK(std::abs(fine.dp.lambda_star - L.dp.lambda_star) <= 0.05);
  CHECK(std::abs(fine.dp.alpha - L.dp.alpha) <= 0.01);
  CHECK(std::abs(fine.dp.q_star - L.dp.q_star) <= 0.05);
  CHECK(fine.dp.crossings_plus == 1);
  CHECK(fine.dp.crossings_minus == 0);
}
