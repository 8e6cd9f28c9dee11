#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <vector>

#include "fascicle/cell_solver.hpp"
#include "fascicle/effective_tensors.hpp"

using namespace fasc;

namespace {

constexpr double kGammaCanonical = 0.3141592653589793;  // 2 pi 0.25 * 0.2

CellGeometry canonical(int grid_n) {
  CellParams p;
  p.grid_n = grid_n;
  return build_cell(p);
}

CellGeometry empty_cube(int n, double gamma_norm) {
  CellGeometry g = build_cell_from_labels(
      n, n, n, 1.0 / n, 1.0 / n, 1.0 / n,
      std::vector<Region>(static_cast<std::size_t>(n) * n * n, Region::Extra));
  g.gamma_area_analytic = gamma_norm;
  return g;
}

}  // namespace

TEST_CASE("no inclusion reduces to the normalized identity tensor") {
  CellGeometry g = empty_cube(12, kGammaCanonical);
  std::array<CellField, 3> f = {solve_cell_e(g, 1, 1e-10), solve_cell_e(g, 2, 1e-10),
                                solve_cell_e(g, 3, 1e-10)};
  TensorAssembly t = assemble_a_e(g, f, 1.0, 1e-10);
  double want = 1.0 / kGammaCanonical;  // 3.1831
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l) {
      double expect = (k == l) ? want : 0.0;
      CHECK(t.tensor[k][l] == doctest::Approx(expect).epsilon(1e-9).scale(want));
    }
  CHECK(t.tensor[0][0] == doctest::Approx(3.1831).epsilon(1e-4));
  CHECK(t.asymmetry < 1e-12);
  // coefficient scaling is exact
  TensorAssembly t2 = assemble_a_e(g, f, 2.5, 1e-10);
  CHECK(t2.tensor[1][1] == doctest::Approx(2.5 * t.tensor[1][1]).epsilon(1e-13));
}

TEST_CASE("cylinder closed form for the axial coefficient") {
  CellGeometry g = canonical(32);
  CellField fi = solve_cell_i(g, 1e-10);
  double a = assemble_a_i(g, fi, 1.0);
  // N_1^i is constant for the straight channel, so the coefficient is the
  // volume fraction over the interface measure
  CHECK(a == doctest::Approx(0.625).epsilon(0.05));
  double exact_from_discrete = g.vol_intra / g.gamma_measure();
  CHECK(a == doctest::Approx(exact_from_discrete).epsilon(1e-9));
  // linear in the raw coefficient
  CHECK(assemble_a_i(g, fi, 3.0) == doctest::Approx(3.0 * a).epsilon(1e-13));
}

TEST_CASE("full-node cylinder gives the r0/2 closed form") {
  CellParams p;
  p.r_m = p.r0;
  p.w_node = 1.0;
  p.grid_n = 16;
  CellGeometry g = build_cell(p);
  CellField fi = solve_cell_i(g, 1e-10);
  double a = assemble_a_i(g, fi, 1.0);
  CHECK(a == doctest::Approx(0.125).epsilon(0.05));
  CHECK(a == doctest::Approx(g.vol_intra / g.gamma_measure()).epsilon(1e-9));
}

TEST_CASE("axial coefficient error shrinks under refinement") {
  double e16, e64;
  {
    CellGeometry g = canonical(16);
    e16 = std::abs(assemble_a_i(g, solve_cell_i(g, 1e-10), 1.0) - 0.625) / 0.625;
  }
  {
    CellGeometry g = canonical(64);
    e64 = std::abs(assemble_a_i(g, solve_cell_i(g, 1e-10), 1.0) - 0.625) / 0.625;
  }
  CHECK(e64 < e16);
  CHECK(e64 < 0.02);
}

TEST_CASE("extracellular tensor structure on the canonical cell") {
  CellGeometry g = canonical(24);
  std::array<CellField, 3> f = {solve_cell_e(g, 1, 1e-10), solve_cell_e(g, 2, 1e-10),
                                solve_cell_e(g, 3, 1e-10)};
  TensorAssembly t = assemble_a_e(g, f, 1.0, 1e-10);
  CHECK(t.asymmetry < 1e-9);
  // symmetric by construction after the defect check
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l) CHECK(t.tensor[k][l] == t.tensor[l][k]);
  // diagonal dominance and positivity (Gershgorin)
  for (int k = 0; k < 3; ++k) {
    double off = 0.0;
    for (int l = 0; l < 3; ++l)
      if (l != k) off += std::abs(t.tensor[k][l]);
    CHECK(t.tensor[k][k] > 0.0);
    CHECK(off < 0.01 * t.tensor[k][k]);
  }
  // transverse isotropy of the cylinder
  CHECK(t.tensor[1][1] == doctest::Approx(t.tensor[2][2]).epsilon(0.01));
  // axial entry exceeds the transverse ones (obstacle blocks cross flow more)
  CHECK(t.tensor[0][0] > t.tensor[1][1]);

  // mean-field (Voigt) bound: the |Y_e|-normalized tensor cannot exceed the
  // raw coefficient
  double bound = g.vol_extra / g.gamma_measure();
  for (int k = 0; k < 3; ++k) {
    double row = t.tensor[k][k];
    for (int l = 0; l < 3; ++l)
      if (l != k) row += std::abs(t.tensor[k][l]);
    CHECK(row <= bound * (1.0 + 1e-10));
  }
}

TEST_CASE("larger myelin obstacle lowers the normalized transverse entries") {
  double prev1 = 1e30, prev2 = 1e30;
  for (double r_m : {0.30, 0.36, 0.42}) {
    CellParams p;
    p.r_m = r_m;
    p.grid_n = 24;
    CellGeometry g = build_cell(p);
    std::array<CellField, 3> f = {solve_cell_e(g, 1, 1e-10),
                                  solve_cell_e(g, 2, 1e-10),
                                  solve_cell_e(g, 3, 1e-10)};
    TensorAssembly t = assemble_a_e(g, f, 1.0, 1e-10);
    double n1 = t.tensor[1][1] * g.gamma_measure() / g.vol_extra;
    double n2 = t.tensor[2][2] * g.gamma_measure() / g.vol_extra;
    CHECK(n1 <= prev1 + 1e-8);
    CHECK(n2 <= prev2 + 1e-8);
    prev1 = n1;
    prev2 = n2;
  }
}

TEST_CASE("quadratic and linear assemblies of one entry agree") {
  CellGeometry g = canonical(24);
  CellField fi = solve_cell_i(g, 1e-10);
  QuadraticFormCheck qc = quadratic_form_check(g, fi, 1.0);
  CHECK(qc.rel_difference < 1e-7);
  CHECK(qc.linear_form > 0.0);
  CellField fe = solve_cell_e(g, 2, 1e-10);
  QuadraticFormCheck qe = quadratic_form_check(g, fe, 1.0);
  CHECK(qe.rel_difference < 1e-7);
}

TEST_CASE("varying-radius channel has a genuinely nonconstant corrector") {
  int n = 32;
  std::vector<Region> labels(static_cast<std::size_t>(n) * n * n, Region::Extra);
  for (int i3 = 0; i3 < n; ++i3)
    for (int i2 = 0; i2 < n; ++i2)
      for (int i1 = 0; i1 < n; ++i1) {
        double y1 = -0.5 + (i1 + 0.5) / n;
        double y2 = -0.5 + (i2 + 0.5) / n;
        double y3 = -0.5 + (i3 + 0.5) / n;
        double r = 0.18 + 0.12 * std::abs(2.0 * y1);  // hourglass profile
        if (std::hypot(y2, y3) < r)
          labels[i1 + n * (i2 + n * i3)] = Region::Intra;
      }
  CellGeometry g =
      build_cell_from_labels(n, n, n, 1.0 / n, 1.0 / n, 1.0 / n, labels);
  CellField fi = solve_cell_i(g, 1e-11);
  double spread = 0.0;
  for (double v : fi.values) spread = std::max(spread, std::abs(v));
  CHECK(spread > 1e-3);  // corrector really varies
  double a = assemble_a_i(g, fi, 1.0);
  CHECK(a > 0.0);
  // narrowing reduces the coefficient below the straight-channel value of the
  // same maximal radius
  CHECK(a < g.vol_intra / g.gamma_measure());
  QuadraticFormCheck qc = quadratic_form_check(g, fi, 1.0);
  CHECK(qc.rel_difference < 0.01);
}

TEST_CASE("gauge invariance: constant shifts leave the assembly unchanged") {
  CellGeometry g = canonical(16);
  CellField fi = solve_cell_i(g, 1e-10);
  double a = assemble_a_i(g, fi, 1.0);
  CellField shifted = fi;
  for (double& v : shifted.values) v += 17.5;
  CHECK(assemble_a_i(g, shifted, 1.0) == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("model file round-trip and validation") {
  EffectiveModel m;
  m.a_i_eff = 0.625;
  m.a_e_eff = {{{1.99, 0.001, 0.0}, {0.001, 1.53, 0.0}, {0.0, 0.0, 1.53}}};
  m.gamma_density = 0.3141592653589793;
  m.c_m = 1.0;
  m.boundary_scale = 1.0 / m.gamma_density;
  m.vol_Y = 1.0;
  m.vol_intra = 0.19634954084936207;
  m.gamma_area = m.gamma_density;
  m.validate();
  auto path = std::filesystem::temp_directory_path() / "fasc_model_test.txt";
  save_effective_model(m, path.string());
  EffectiveModel r = load_effective_model(path.string());
  CHECK(r.a_i_eff == m.a_i_eff);
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l) CHECK(r.a_e_eff[k][l] == m.a_e_eff[k][l]);
  CHECK(r.gamma_density == m.gamma_density);
  CHECK(r.boundary_scale == m.boundary_scale);
  CHECK(r.vol_intra == m.vol_intra);
  std::filesystem::remove(path);

  EffectiveModel bad = m;
  bad.a_i_eff = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = m;
  bad.a_e_eff[0][1] = 0.5;  // strongly asymmetric
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
