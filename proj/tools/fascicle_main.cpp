#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "fascicle/cell_solver.hpp"
#include "fascicle/effective_tensors.hpp"
#include "fascicle/micro_ladder.hpp"
#include "fascicle/run_io.hpp"

namespace {

using namespace fasc;
namespace fs = std::filesystem;
using nlohmann::json;

struct Opts {
  std::string config;
  std::string out = "out";
  long long seed = -1;
  int threads = 1;
  bool verbose = false;
};

void say(const Opts& o, const std::string& msg) {
  if (o.verbose) std::cout << msg << "\n";
}

CellGeometry build_geometry(const json& cell) {
  CellGeometry geom;
  if (cell.contains("label_grid")) {
    std::string path = cell["label_grid"].get<std::string>();
    if (!fs::exists(path)) throw ConfigError("label grid not found: " + path);
    geom = load_label_grid(path);
  } else {
    geom = build_cell(parse_cell_params(cell));
  }
  if (cell.contains("gamma_norm")) {
    double gn = cell["gamma_norm"].get<double>();
    if (!(gn > 0.0)) throw ConfigError("cell: gamma_norm must be positive");
    geom.gamma_area_analytic = gn;
  }
  return geom;
}

EffectiveModel load_model_for(const ParsedConfig& cfg) {
  if (!cfg.j.contains("model_file"))
    throw ConfigError("config: model_file is required for this subcommand");
  std::string path = cfg.j["model_file"].get<std::string>();
  if (!fs::exists(path)) throw ConfigError("model file not found: " + path);
  return load_effective_model(path);
}

FhnParams parse_fhn(const json& sec, FhnParams base) {
  base.theta = sec.value("theta", base.theta);
  base.a = sec.value("a", base.a);
  base.b = sec.value("b", base.b);
  base.c_m = sec.value("c_m", base.c_m);
  base.validate();
  return base;
}

int cmd_cell(const Opts& o, const ParsedConfig& cfg) {
  if (!cfg.j.contains("cell")) throw ConfigError("config: missing cell section");
  const json& cell = cfg.j["cell"];
  double a_i = cell.value("a_i", 1.0);
  double a_e = cell.value("a_e", 1.0);
  double tol = cell.value("tol", 1e-8);
  if (!(a_i > 0.0) || !(a_e > 0.0) || !(tol > 0.0))
    throw ConfigError("cell: a_i, a_e, tol must be positive");
  CellGeometry geom = build_geometry(cell);

  RunManifest manifest(o.out, "cell", cfg);
  say(o, "solving extracellular cell problems");
  std::array<CellField, 3> ne = {solve_cell_e(geom, 1, tol, o.threads),
                                 solve_cell_e(geom, 2, tol, o.threads),
                                 solve_cell_e(geom, 3, tol, o.threads)};
  TensorAssembly ae = assemble_a_e(geom, ne, a_e, tol);

  json report;
  report["asymmetry"] = ae.asymmetry;
  EffectiveModel model;
  model.a_e_eff = ae.tensor;
  model.c_m = cell.value("c_m", 1.0);
  model.fhn = parse_fhn(cell, FhnParams{});
  model.fhn.c_m = model.c_m;
  model.vol_Y = geom.vol_Y;
  model.vol_intra = geom.vol_intra;
  model.gamma_area = geom.gamma_measure();
  model.gamma_density = geom.gamma_measure() / geom.vol_Y;
  model.boundary_scale =
      cell.value("boundary_scale", geom.vol_Y / geom.gamma_measure());

  if (geom.vol_intra > 0.0) {
    say(o, "solving intracellular cell problem");
    CellField ni = solve_cell_i(geom, tol, o.threads);
    model.a_i_eff = assemble_a_i(geom, ni, a_i);
    QuadraticFormCheck qc = quadratic_form_check(geom, ni, a_i);
    report["quadratic_form"] = {{"linear", qc.linear_form},
                                {"quadratic", qc.quadratic_form},
                                {"rel_difference", qc.rel_difference}};
    if (cell.value("dump_fields", false)) {
      dump_cell_field_csv(ni, geom, (fs::path(o.out) / "N_i.csv").string());
      manifest.add_output("N_i.csv");
    }
  } else {
    report["quadratic_form"] = nullptr;
  }
  if (cell.value("dump_fields", false))
    for (int k = 0; k < 3; ++k) {
      std::string name = "N_e" + std::to_string(k + 1) + ".csv";
      dump_cell_field_csv(ne[k], geom, (fs::path(o.out) / name).string());
      manifest.add_output(name);
    }

  // Refinement delta against the half-resolution grid (canonical cells only).
  if (geom.params && geom.params->grid_n / 2 >= 8) {
    CellParams coarse = *geom.params;
    coarse.grid_n /= 2;
    CellGeometry cg = build_cell(coarse);
    std::array<CellField, 3> cne = {solve_cell_e(cg, 1, tol, o.threads),
                                    solve_cell_e(cg, 2, tol, o.threads),
                                    solve_cell_e(cg, 3, tol, o.threads)};
    TensorAssembly cae = assemble_a_e(cg, cne, a_e, tol);
    double delta_e = 0.0;
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l)
        delta_e = std::max(delta_e, std::abs(ae.tensor[k][l] - cae.tensor[k][l]));
    report["refine_delta_a_e"] = delta_e;
    if (geom.vol_intra > 0.0) {
      double ci = assemble_a_i(cg, solve_cell_i(cg, tol, o.threads), a_i);
      report["refine_delta_a_i"] = std::abs(model.a_i_eff - ci);
    }
  }

  report["a_i_eff"] = model.a_i_eff;
  report["a_e_eff"] = {model.a_e_eff[0][0], model.a_e_eff[1][1],
                       model.a_e_eff[2][2]};
  report["gamma_density"] = model.gamma_density;

  save_effective_model(model, (fs::path(o.out) / "model.txt").string());
  manifest.add_output("model.txt");
  std::ofstream rf(fs::path(o.out) / "cell_report.json");
  rf << report.dump(2) << '\n';
  manifest.add_output("cell_report.json");
  manifest.finalize("complete");
  say(o, "cell: wrote model.txt and cell_report.json");
  return 0;
}

void write_trajectory(const Opts& o, RunManifest& manifest, const MacroMesh& mesh,
                      const Trajectory& traj) {
  write_energy_csv(traj.energy, (fs::path(o.out) / "energy.csv").string());
  manifest.add_output("energy.csv");
  for (std::size_t i = 0; i < traj.snapshots.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "snapshot_%04zu.csv", i);
    write_macro_snapshot_csv(mesh, traj.snapshots[i],
                             (fs::path(o.out) / name).string());
    manifest.add_output(name);
    if (mesh.mode == MeshMode::Box) {
      std::snprintf(name, sizeof(name), "snapshot_%04zu.vtk", i);
      write_macro_vtk(mesh, traj.snapshots[i], (fs::path(o.out) / name).string());
      manifest.add_output(name);
    }
  }
}

int cmd_solve(const Opts& o, const ParsedConfig& cfg) {
  EffectiveModel model = load_model_for(cfg);
  if (!cfg.j.contains("scenario"))
    throw ConfigError("config: missing scenario section");
  ScenarioConfig sc = parse_scenario(cfg.j["scenario"], model);
  sc.threads = o.threads;
  MacroProblem prob(sc.mesh, model, sc.linear_ion, o.threads);

  RunManifest manifest(o.out, "solve", cfg);
  say(o, "running macro scenario");
  Trajectory traj = prob.run(sc);
  write_trajectory(o, manifest, sc.mesh, traj);
  write_macro_snapshot_csv(sc.mesh, traj.final_state,
                           (fs::path(o.out) / "final.csv").string());
  manifest.add_output("final.csv");
  manifest.finalize("complete");
  say(o, "solve: wrote energy.csv and final.csv");
  return 0;
}

int cmd_ladder(const Opts& o, const ParsedConfig& cfg) {
  EffectiveModel model = load_model_for(cfg);
  if (!cfg.j.contains("scenario"))
    throw ConfigError("config: missing scenario section");
  ScenarioConfig sc = parse_scenario(cfg.j["scenario"], model);
  if (sc.mesh.mode != MeshMode::Interval)
    throw ConfigError("ladder: scenario must use interval mode");
  double eps = sc.mesh.L / 16.0;
  if (cfg.j.contains("ladder")) eps = cfg.j["ladder"].value("eps", eps);

  LadderProblem lad(model, sc.mesh.L, eps, sc.linear_ion);
  LadderScenario lc;
  lc.L = sc.mesh.L;
  lc.eps = eps;
  lc.model = model;
  lc.stim = sc.stim;
  lc.scheme = sc.scheme;
  lc.dt = sc.dt;
  lc.T = sc.T;
  lc.lambda = sc.lambda;
  lc.linear_ion = sc.linear_ion;
  lc.tol = sc.elliptic_tol;
  lc.newton_tol = sc.newton_tol;
  RunManifest manifest(o.out, "ladder", cfg);
  say(o, "running ladder scenario");
  Trajectory traj = lad.run(lc);
  write_energy_csv(traj.energy, (fs::path(o.out) / "energy.csv").string());
  manifest.add_output("energy.csv");
  std::vector<double> xs(lad.cells());
  for (int j = 0; j < lad.cells(); ++j) xs[j] = lad.x(j);
  write_ladder_snapshot_csv(xs, traj.final_state,
                            (fs::path(o.out) / "final.csv").string());
  manifest.add_output("final.csv");
  manifest.finalize("complete");
  say(o, "ladder: wrote energy.csv and final.csv");
  return 0;
}

int cmd_converge(const Opts& o, const ParsedConfig& cfg) {
  EffectiveModel model = load_model_for(cfg);
  if (!cfg.j.contains("scenario"))
    throw ConfigError("config: missing scenario section");
  ScenarioConfig sc = parse_scenario(cfg.j["scenario"], model);
  if (sc.mesh.mode != MeshMode::Interval)
    throw ConfigError("converge: scenario must use interval mode");

  std::vector<double> eps_list = {sc.mesh.L / 16.0, sc.mesh.L / 32.0,
                                  sc.mesh.L / 64.0};
  int ref_nx = 257;
  if (cfg.j.contains("converge")) {
    const json& cs = cfg.j["converge"];
    if (cs.contains("eps_list"))
      eps_list = cs["eps_list"].get<std::vector<double>>();
    ref_nx = cs.value("ref_nx", ref_nx);
  }

  LadderScenario base;
  base.L = sc.mesh.L;
  base.model = model;
  base.stim = sc.stim;
  base.scheme = sc.scheme;
  base.dt = sc.dt;
  base.T = sc.T;
  base.lambda = sc.lambda;
  base.linear_ion = sc.linear_ion;
  base.tol = sc.elliptic_tol;
  base.newton_tol = sc.newton_tol;

  RunManifest manifest(o.out, "converge", cfg);
  say(o, "running convergence sweep");
  ConvergeStudy study = converge_study(base, eps_list, ref_nx);
  save_converge_csv(study, (fs::path(o.out) / "converge.csv").string());
  manifest.add_output("converge.csv");

  bool monotone = true;
  for (double r : study.ratio_v_l2) monotone = monotone && r > 1.0;
  for (double r : study.ratio_v_final) monotone = monotone && r > 1.0;
  for (double r : study.ratio_ui) monotone = monotone && r > 1.0;
  for (double r : study.ratio_ue) monotone = monotone && r > 1.0;
  std::cout << (monotone ? "[PASS]" : "[FAIL]")
            << " convergence: errors decrease monotonically\n";
  manifest.finalize("complete");
  return 0;
}

int cmd_verify(const Opts& o, const ParsedConfig& cfg) {
  json vsec = cfg.j.value("verify", json::object());
  std::uint64_t seed =
      o.seed >= 0 ? static_cast<std::uint64_t>(o.seed)
                  : vsec.value("seed", std::uint64_t{1});
  int pairs = vsec.value("pairs", 1000);
  FhnParams fhn = parse_fhn(vsec, FhnParams{});
  double lambda = vsec.value("lambda", -1.0);
  if (lambda < 0.0) lambda = lambda_min(fhn);

  EffectiveModel model =
      cfg.j.contains("model_file") ? load_model_for(cfg) : default_model();
  model.fhn = fhn;
  model.fhn.c_m = model.c_m;

  RunManifest manifest(o.out, "verify", cfg);
  json report;
  report["seed"] = seed;
  report["lambda"] = lambda;
  bool all_pass = true;
  std::mt19937_64 rng(seed);

  {  // Monotonicity of the shifted operator parts on three mesh sizes.
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    json suite;
    bool pass = true;
    for (int n : {16, 64, 256}) {
      MacroProblem prob(MacroMesh::interval(1.0, n), model, false, o.threads);
      LinearOp apply_a = [&prob](std::span<const double> x, std::span<double> y) {
        std::vector<double> r = prob.apply_A_eff(x, 1e-12);
        std::copy(r.begin(), r.end(), y.begin());
      };
      std::vector<std::pair<FieldPair, FieldPair>> sample(pairs);
      for (auto& [w1, w2] : sample) {
        w1.w.resize(n);
        w1.h.resize(n);
        w2.w.resize(n);
        w2.h.resize(n);
        for (int i = 0; i < n; ++i) {
          w1.w[i] = dist(rng);
          w1.h[i] = dist(rng);
          w2.w[i] = dist(rng);
          w2.h[i] = dist(rng);
        }
      }
      for (auto [op, name] : {std::pair{MonotoneOp::B1, "B1"},
                              std::pair{MonotoneOp::B2, "B2"},
                              std::pair{MonotoneOp::Full, "full"}}) {
        MonotoneReport rep = check_monotone(op, lambda, model.fhn, sample,
                                            1.0 / n, apply_a, 0.1);
        json entry = {{"mesh", n},
                      {"op", name},
                      {"pass", rep.pass},
                      {"worst", rep.worst},
                      {"violations", rep.violations}};
        suite["checks"].push_back(entry);
        pass = pass && rep.pass;
      }
    }
    suite["pass"] = pass;
    report["monotonicity"] = suite;
    all_pass = all_pass && pass;
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " monotonicity suite\n";
  }

  {  // Energy certificate on the pulse scenario at two step sizes.
    json suite;
    bool pass = true;
    double c_fit = 0.0;
    try {
      std::vector<std::pair<double, std::vector<EnergyRecord>>> runs;
      for (double dt : {1e-2, 1e-3}) {
        ScenarioConfig sc = standard_pulse_scenario(model);
        sc.dt = dt;
        MacroProblem prob(sc.mesh, model, false, o.threads);
        runs.emplace_back(dt, prob.run(sc).energy);
        c_fit = std::max(c_fit, fit_gronwall_constant(runs.back().second, dt));
      }
      for (auto& [dt, rec] : runs) {
        double cum_s = 0.0;
        for (std::size_t k = 1; k < rec.size(); ++k) {
          cum_s += rec[k].S * dt;
          double bound = (rec.front().E + c_fit * cum_s) * std::exp(c_fit * rec[k].t);
          if (rec[k].E > bound * (1.0 + 1e-12)) pass = false;
        }
      }
      suite["C"] = c_fit;
    } catch (const NumericalError& e) {
      pass = false;
      suite["error"] = e.what();
    }
    suite["pass"] = pass;
    report["energy_certificate"] = suite;
    all_pass = all_pass && pass;
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " energy certificate suite\n";
  }

  {  // A_eff linearity, symmetry, nonnegativity.
    MacroMesh mesh = MacroMesh::interval(1.0, 65);
    MacroProblem prob(mesh, model, false, o.threads);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    auto rand_field = [&]() {
      std::vector<double> f(mesh.nodes(), 0.0);
      for (int i = 1; i + 1 < mesh.nx; ++i) f[i] = dist(rng);
      return f;
    };
    double lin_err = 0.0, sym_err = 0.0, min_quad = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> x = rand_field(), y = rand_field();
      std::vector<double> ax = prob.apply_A_eff(x, 1e-13);
      std::vector<double> ay = prob.apply_A_eff(y, 1e-13);
      std::vector<double> z(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) z[i] = 0.7 * x[i] - 1.3 * y[i];
      std::vector<double> az = prob.apply_A_eff(z, 1e-13);
      double scale = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        double lhs = az[i] - (0.7 * ax[i] - 1.3 * ay[i]);
        lin_err = std::max(lin_err, std::abs(lhs));
        scale = std::max(scale, std::abs(ax[i]) + std::abs(ay[i]));
      }
      double axy = prob.mesh_inner(ax, y), xay = prob.mesh_inner(x, ay);
      sym_err = std::max(
          sym_err, std::abs(axy - xay) / std::max(1.0, std::abs(axy)));
      min_quad = std::min(min_quad, prob.mesh_inner(ax, x));
    }
    bool pass = lin_err <= 1e-9 && sym_err <= 1e-8 && min_quad >= -1e-12;
    report["a_eff"] = {{"pass", pass},
                      {"linearity", lin_err},
                      {"symmetry", sym_err},
                      {"min_quadratic", min_quad}};
    all_pass = all_pass && pass;
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " A_eff operator suite\n";
  }

  {  // Quadratic-form identity on a small canonical cell.
    int grid_n = vsec.value("grid_n", 24);
    double tol = vsec.value("tol", 1e-10);
    CellParams p;
    p.grid_n = grid_n;
    CellGeometry geom = build_cell(p);
    CellField ni = solve_cell_i(geom, tol, o.threads);
    QuadraticFormCheck qc = quadratic_form_check(geom, ni, 1.0);
    bool pass = qc.rel_difference <= 10.0 * tol;
    report["quadratic_form"] = {{"pass", pass},
                                {"rel_difference", qc.rel_difference}};
    all_pass = all_pass && pass;
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " quadratic form suite\n";
  }

  report["pass"] = all_pass;
  std::ofstream rf(fs::path(o.out) / "verify_report.json");
  rf << report.dump(2) << '\n';
  manifest.add_output("verify_report.json");
  manifest.finalize("complete");
  return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fascicle: homogenized axon-bundle solver"};
  app.require_subcommand(1);
  Opts o;
  app.add_option("-c,--config", o.config, "config file (JSON)")->required();
  app.add_option("-o,--out", o.out, "output directory");
  app.add_option("--seed", o.seed, "override the property-suite seed");
  app.add_option("--threads", o.threads, "worker thread count")
      ->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", o.verbose, "progress output");

  auto* c_cell = app.add_subcommand("cell", "solve cell problems, write the model");
  auto* c_solve = app.add_subcommand("solve", "run the macro scenario");
  auto* c_ladder = app.add_subcommand("ladder", "run the cell-resolved ladder");
  auto* c_converge = app.add_subcommand("converge", "ladder-vs-macro eps sweep");
  auto* c_verify = app.add_subcommand("verify", "randomized property suites");

  CLI11_PARSE(app, argc, argv);

  try {
    ParsedConfig cfg = load_config(o.config);
    if (c_cell->parsed()) return cmd_cell(o, cfg);
    if (c_solve->parsed()) return cmd_solve(o, cfg);
    if (c_ladder->parsed()) return cmd_ladder(o, cfg);
    if (c_converge->parsed()) return cmd_converge(o, cfg);
    if (c_verify->parsed()) return cmd_verify(o, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const GeometryError& e) {
    std::cerr << "geometry error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
