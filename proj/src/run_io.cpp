#include "fascicle/run_io.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fasc {

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ParsedConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  ParsedConfig cfg;
  cfg.raw = ss.str();
  cfg.hash = fnv1a64(cfg.raw);
  try {
    cfg.j = nlohmann::json::parse(cfg.raw);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  if (!cfg.j.contains("schema_version") || cfg.j["schema_version"] != 1)
    throw ConfigError("config: schema_version must be 1");
  return cfg;
}

CellParams parse_cell_params(const nlohmann::json& cell) {
  CellParams p;
  p.r0 = cell.value("r0", p.r0);
  p.R0 = cell.value("R0", p.R0);
  p.r_m = cell.value("r_m", p.r_m);
  p.w_node = cell.value("w_node", p.w_node);
  p.grid_n = cell.value("grid_n", p.grid_n);
  p.validate();
  return p;
}

MacroMesh parse_mesh(const nlohmann::json& scenario) {
  std::string mode = scenario.value("mode", "interval");
  double L = scenario.value("L", 1.0);
  int nx = scenario.value("nx", 65);
  if (mode == "interval") return MacroMesh::interval(L, nx);
  if (mode == "box")
    return MacroMesh::box(L, scenario.value("Ly", 1.0), scenario.value("Lz", 1.0),
                          nx, scenario.value("ny", 9), scenario.value("nz", 9));
  throw ConfigError("scenario: mode must be interval or box");
}

StimulusSpec parse_stimulus(const nlohmann::json& stim) {
  StimulusSpec s;
  std::string profile = stim.value("profile", "none");
  if (profile == "none")
    s.profile = StimulusProfile::None;
  else if (profile == "constant")
    s.profile = StimulusProfile::Constant;
  else if (profile == "pulse")
    s.profile = StimulusProfile::Pulse;
  else if (profile == "gaussian")
    s.profile = StimulusProfile::GaussianTime;
  else
    throw ConfigError("stimulus: unknown profile " + profile);
  s.amplitude = stim.value("amplitude", 0.0);
  s.t_on = stim.value("t_on", 0.0);
  s.t_off = stim.value("t_off", 0.0);
  s.t0 = stim.value("t0", 0.0);
  s.sigma_t = stim.value("sigma_t", 1.0);
  s.x0 = stim.value("x0", 0.0);
  s.sigma_x = stim.value("sigma_x", 0.0);
  s.validate();
  return s;
}

ScenarioConfig parse_scenario(const nlohmann::json& scenario,
                              const EffectiveModel& model) {
  ScenarioConfig cfg;
  cfg.mesh = parse_mesh(scenario);
  cfg.model = model;
  if (scenario.contains("stimulus")) cfg.stim = parse_stimulus(scenario["stimulus"]);
  std::string scheme = scenario.value("scheme", "imex");
  if (scheme == "imex")
    cfg.scheme = Scheme::Imex;
  else if (scheme == "implicit")
    cfg.scheme = Scheme::Implicit;
  else
    throw ConfigError("scenario: scheme must be imex or implicit");
  cfg.dt = scenario.value("dt", cfg.dt);
  cfg.T = scenario.value("T", cfg.T);
  cfg.lambda = scenario.value("lambda", cfg.lambda);
  cfg.linear_ion = scenario.value("linear_ion", cfg.linear_ion);
  cfg.snapshot_every = scenario.value("snapshot_every", cfg.snapshot_every);
  cfg.elliptic_tol = scenario.value("elliptic_tol", cfg.elliptic_tol);
  cfg.newton_tol = scenario.value("newton_tol", cfg.newton_tol);
  if (!(cfg.dt > 0.0) || cfg.T < 0.0)
    throw ConfigError("scenario: need dt > 0 and T >= 0");
  if (cfg.lambda != 0.0 && cfg.lambda + 1e-12 < lambda_min(model.fhn))
    throw ConfigError("scenario: lambda below lambda_min");
  return cfg;
}

EffectiveModel default_model() {
  EffectiveModel m;
  m.a_i_eff = 0.625;
  m.a_e_eff = {{{1.9, 0.0, 0.0}, {0.0, 1.6, 0.0}, {0.0, 0.0, 1.6}}};
  m.gamma_density = 0.31416;
  m.c_m = 1.0;
  m.fhn = FhnParams{};
  m.boundary_scale = 1.0 / m.gamma_density;
  m.vol_Y = 1.0;
  m.vol_intra = 0.19635;
  m.gamma_area = 0.31416;
  m.validate();
  return m;
}

ScenarioConfig standard_pulse_scenario(const EffectiveModel& model) {
  ScenarioConfig cfg;
  cfg.mesh = MacroMesh::interval(1.0, 65);
  cfg.model = model;
  cfg.stim.profile = StimulusProfile::Pulse;
  cfg.stim.amplitude = -200.0;
  cfg.stim.t_on = 0.05;
  cfg.stim.t_off = 0.35;
  cfg.stim.x0 = 0.3;
  cfg.stim.sigma_x = 0.08;
  cfg.scheme = Scheme::Imex;
  cfg.dt = 1e-3;
  cfg.T = 1.0;
  return cfg;
}

void write_energy_csv(const std::vector<EnergyRecord>& records,
                      const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "t,E,D,S\n";
  for (const EnergyRecord& r : records)
    f << fmt(r.t) << ',' << fmt(r.E) << ',' << fmt(r.D) << ',' << fmt(r.S) << '\n';
}

void write_macro_snapshot_csv(const MacroMesh& mesh, const MacroState& s,
                              const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "x,y,z,v,g,u_i,u_e\n";
  for (int iz = 0; iz < mesh.nz; ++iz)
    for (int iy = 0; iy < mesh.ny; ++iy)
      for (int ix = 0; ix < mesh.nx; ++ix) {
        int node = mesh.index(ix, iy, iz);
        f << fmt(ix * mesh.hx) << ',' << fmt(iy * mesh.hy) << ','
          << fmt(iz * mesh.hz) << ',' << fmt(s.v[node]) << ',' << fmt(s.g[node])
          << ',' << fmt(s.u_i[node]) << ',' << fmt(s.u_e[node]) << '\n';
      }
}

void write_ladder_snapshot_csv(const std::vector<double>& x, const MacroState& s,
                               const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "x,v,g,u_i,u_e\n";
  for (std::size_t j = 0; j < x.size(); ++j)
    f << fmt(x[j]) << ',' << fmt(s.v[j]) << ',' << fmt(s.g[j]) << ','
      << fmt(s.u_i[j]) << ',' << fmt(s.u_e[j]) << '\n';
}

void write_macro_vtk(const MacroMesh& mesh, const MacroState& s,
                     const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "# vtk DataFile Version 3.0\nfascicle snapshot t=" << fmt(s.t)
    << "\nASCII\nDATASET STRUCTURED_POINTS\n";
  f << "DIMENSIONS " << mesh.nx << ' ' << mesh.ny << ' ' << mesh.nz << '\n';
  f << "ORIGIN 0 0 0\n";
  f << "SPACING " << fmt(mesh.hx) << ' ' << fmt(mesh.hy) << ' ' << fmt(mesh.hz)
    << '\n';
  f << "POINT_DATA " << mesh.nodes() << '\n';
  auto field = [&](const char* name, const std::vector<double>& vals) {
    f << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (double v : vals) f << fmt(v) << '\n';
  };
  field("v", s.v);
  field("g", s.g);
  field("u_i", s.u_i);
  field("u_e", s.u_e);
}

RunManifest::RunManifest(const std::string& out_dir, const std::string& subcommand,
                         const ParsedConfig& cfg)
    : subcommand_(subcommand), hash_(hash_hex(cfg.hash)), t0_(now_s()) {
  std::filesystem::create_directories(out_dir);
  path_ = (std::filesystem::path(out_dir) / "manifest.json").string();
  write("running", 0.0);
}

void RunManifest::add_output(const std::string& name) { outputs_.push_back(name); }

void RunManifest::finalize(const std::string& status) {
  write(status, now_s() - t0_);
}

void RunManifest::write(const std::string& status, double wall_s) const {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["subcommand"] = subcommand_;
  j["config_hash"] = hash_;
  j["status"] = status;
  j["partial"] = status != "complete";
  j["wall_time_s"] = wall_s;
  j["outputs"] = outputs_;
  std::ofstream f(path_);
  if (!f) throw ConfigError("cannot write manifest: " + path_);
  f << j.dump(2) << '\n';
}

}  // namespace fasc
