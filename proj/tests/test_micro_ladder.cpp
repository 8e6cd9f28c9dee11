#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "fascicle/micro_ladder.hpp"
#include "fascicle/run_io.hpp"

using namespace fasc;

namespace {

double l2(const LadderProblem& p, const std::vector<double>& a,
          const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d * p.eps();
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("ladder construction") {
  EffectiveModel model = default_model();
  LadderProblem p(model, 1.0, 1.0 / 8.0);
  CHECK(p.cells() == 8);
  CHECK(p.x(0) == doctest::Approx(1.0 / 16.0).epsilon(1e-14));
  CHECK(p.x(7) == doctest::Approx(15.0 / 16.0).epsilon(1e-14));
  // eps must tile the interval with at least a few rungs
  CHECK_THROWS_AS(LadderProblem(model, 1.0, 0.3), ConfigError);
  CHECK_THROWS_AS(LadderProblem(model, 1.0, 0.5), ConfigError);
}

TEST_CASE("rest state is a fixed point of both ladder schemes") {
  EffectiveModel model = default_model();
  LadderProblem p(model, 1.0, 1.0 / 16.0);
  MacroState rest = p.rest_state(1e-13);
  StimulusSpec none;
  MacroState s1 = p.step_imex(rest, none, 1e-2, 1e-12);
  CHECK(l2(p, s1.v, rest.v) < 1e-10);
  CHECK(l2(p, s1.g, rest.g) < 1e-10);
  MacroState s2 = p.step_implicit(rest, none, 1e-2, lambda_min(model.fhn), 1e-12);
  CHECK(l2(p, s2.v, rest.v) < 1e-10);
  CHECK(l2(p, s2.g, rest.g) < 1e-10);
  // and it stays put over many steps
  MacroState s = rest;
  for (int k = 0; k < 20; ++k) s = p.step_imex(s, none, 1e-2, 1e-12);
  CHECK(l2(p, s.v, rest.v) < 1e-9);
}

TEST_CASE("steps preserve the transmembrane jump identity") {
  EffectiveModel model = default_model();
  ScenarioConfig pulse = standard_pulse_scenario(model);
  LadderProblem p(model, 1.0, 1.0 / 16.0);
  MacroState s = p.rest_state(1e-12);
  s.t = 0.1;  // inside the pulse window, so the source is active
  for (int k = 0; k < 10; ++k) {
    s = p.step_imex(s, pulse.stim, 1e-3, 1e-12);
    CHECK(MacroProblem::jump_residual(s) < 1e-10);
    for (double v : s.v) CHECK(std::isfinite(v));
  }
}

TEST_CASE("linear regime dissipates energy without a source") {
  EffectiveModel model = default_model();
  LadderProblem p(model, 1.0, 1.0 / 16.0, /*linear_ion=*/true);
  MacroState s;
  s.t = 0.0;
  int m = p.cells();
  s.v.resize(m);
  s.g.assign(m, 0.0);
  s.u_i.assign(m, 0.0);
  s.u_e.assign(m, 0.0);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int j = 0; j < m; ++j) s.v[j] = u(rng);
  auto energy = [&](const MacroState& st) {
    double e = 0.0;
    for (int j = 0; j < m; ++j) e += (st.v[j] * st.v[j] + st.g[j] * st.g[j]) * p.eps();
    return e;
  };
  double e0 = energy(s);
  double prev = e0;
  for (int k = 0; k < 30; ++k) {
    s = p.step_imex(s, StimulusSpec{}, 1e-2, 1e-12);
    double e = energy(s);
    CHECK(e <= prev * (1.0 + 1e-12));
    prev = e;
  }
  CHECK(prev < 0.5 * e0);  // strictly decayed, not just nonincreasing
}

TEST_CASE("implicit and imex ladder steps agree to first order") {
  EffectiveModel model = default_model();
  ScenarioConfig pulse = standard_pulse_scenario(model);
  LadderScenario cfg;
  cfg.model = model;
  cfg.stim = pulse.stim;
  cfg.eps = 1.0 / 16.0;
  cfg.dt = 1e-3;
  cfg.T = 0.1;
  LadderProblem p(model, cfg.L, cfg.eps);
  Trajectory a = p.run(cfg);
  cfg.scheme = Scheme::Implicit;
  Trajectory b = p.run(cfg);
  double d = l2(p, a.final_state.v, b.final_state.v);
  CHECK(d < 1e-3 * (1.0 + std::sqrt(16.0)));
}

TEST_CASE("ladder runs are bitwise deterministic") {
  EffectiveModel model = default_model();
  ScenarioConfig pulse = standard_pulse_scenario(model);
  LadderScenario cfg;
  cfg.model = model;
  cfg.stim = pulse.stim;
  cfg.T = 0.1;
  LadderProblem p(model, cfg.L, cfg.eps);
  Trajectory a = p.run(cfg);
  Trajectory b = p.run(cfg);
  for (std::size_t i = 0; i < a.final_state.v.size(); ++i) {
    CHECK(a.final_state.v[i] == b.final_state.v[i]);
    CHECK(a.final_state.u_e[i] == b.final_state.u_e[i]);
  }
}

TEST_CASE("stability bound guards the explicit reaction") {
  EffectiveModel model = default_model();
  LadderProblem p(model, 1.0, 1.0 / 8.0);
  MacroState rest = p.rest_state(1e-12);
  double cap = p.dt_max(rest.v);
  CHECK(cap > 0.0);
  CHECK_THROWS_AS(p.step_imex(rest, StimulusSpec{}, 2.0 * cap, 1e-10), ConfigError);
}

TEST_CASE("ladder converges to the homogenized solution") {
  EffectiveModel model = default_model();
  ScenarioConfig pulse = standard_pulse_scenario(model);
  LadderScenario base;
  base.model = model;
  base.stim = pulse.stim;
  base.dt = 2e-3;
  base.T = 0.3;
  double eps_list[2] = {1.0 / 8.0, 1.0 / 16.0};
  ConvergeStudy st = converge_study(base, eps_list, 129);
  REQUIRE(st.rows.size() == 2);
  CHECK(st.rows[0].eps == doctest::Approx(1.0 / 8.0));
  // every error column shrinks under refinement
  CHECK(st.rows[1].err_v_l2 < st.rows[0].err_v_l2);
  CHECK(st.rows[1].err_v_final < st.rows[0].err_v_final);
  CHECK(st.rows[1].err_ui < st.rows[0].err_ui);
  CHECK(st.rows[1].err_ue < st.rows[0].err_ue);
  REQUIRE(st.ratio_v_l2.size() == 1);
  CHECK(st.ratio_v_l2[0] > 1.3);

  auto path = std::filesystem::temp_directory_path() / "fasc_converge_test.csv";
  save_converge_csv(st, path.string());
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header.find("err_v_l2") != std::string::npos);
  int lines = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 2);
  std::filesystem::remove(path);
}
