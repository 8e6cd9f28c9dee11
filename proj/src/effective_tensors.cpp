#include "fascicle/effective_tensors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace fasc {

void EffectiveModel::validate() const {
  fhn.validate();
  if (!(a_i_eff > 0.0)) throw ConfigError("effective model: a_i_eff must be positive");
  if (!(c_m > 0.0)) throw ConfigError("effective model: c_m must be positive");
  if (!(gamma_density > 0.0))
    throw ConfigError("effective model: gamma_density must be positive");
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l)
      if (std::abs(a_e_eff[k][l] - a_e_eff[l][k]) >
          1e-8 * std::max(1.0, std::abs(a_e_eff[k][k])))
        throw ConfigError("effective model: a_e_eff must be symmetric");
}

namespace {

// Corrected gradient component G_d = D_d N + delta_{kd} at the +d face of
// each subdomain voxel, visited through `fn(d, G_d, weight)`. Faces against
// the obstacle carry zero corrected flux and are skipped; the weight is the
// voxel volume, matching the finite-volume energy.
template <typename Fn>
void for_corrected_faces(const CellGeometry& g, const CellField& f, Fn&& fn) {
  const double h[3] = {g.h1, g.h2, g.h3};
  const int n[3] = {g.n1, g.n2, g.n3};
  const bool wrap_all = f.region == Region::Extra;
  const double vol = g.voxel_volume();
  for (int u = 0; u < f.map.count(); ++u) {
    int v = f.map.voxel_of_unknown[u];
    int i3 = v / (g.n1 * g.n2);
    int i2 = (v / g.n1) % g.n2;
    int i1 = v % g.n1;
    int idx0[3] = {i1, i2, i3};
    for (int d = 0; d < 3; ++d) {
      int idx[3] = {idx0[0], idx0[1], idx0[2]};
      idx[d] += 1;
      if (idx[d] >= n[d]) {
        if (d != 0 && !wrap_all) continue;
        idx[d] = 0;
      }
      int nbv = g.index(idx[0], idx[1], idx[2]);
      int un = f.map.unknown_of_voxel[nbv];
      if (un < 0) continue;
      double grad = (f.values[un] - f.values[u]) / h[d];
      if (d == f.k) grad += 1.0;
      fn(d, grad, vol);
    }
  }
}

double linear_entry(const CellGeometry& g, const CellField& f, int l) {
  double sum = 0.0;
  for_corrected_faces(g, f, [&](int d, double grad, double w) {
    if (d == l) sum += grad * w;
  });
  return sum;
}

}  // namespace

TensorAssembly assemble_a_e(const CellGeometry& geom,
                            const std::array<CellField, 3>& fields, double a_e,
                            double solver_tol) {
  const double gamma = geom.gamma_measure();
  if (!(gamma > 0.0)) throw GeometryError("assemble_a_e: |Gamma| vanishes");
  Tensor3 raw{};
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l)
      raw[k][l] = a_e * linear_entry(geom, fields[k], l) / gamma;

  TensorAssembly out;
  double defect = 0.0, scale = 0.0;
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l) {
      out.tensor[k][l] = 0.5 * (raw[k][l] + raw[l][k]);
      defect += (raw[k][l] - raw[l][k]) * (raw[k][l] - raw[l][k]);
      scale += raw[k][l] * raw[k][l];
    }
  out.asymmetry = scale > 0.0 ? std::sqrt(defect / scale) : 0.0;
  if (out.asymmetry > 10.0 * solver_tol)
    throw NumericalError("assemble_a_e: symmetry defect above 10x solver tol",
                         out.asymmetry);
  return out;
}

double assemble_a_i(const CellGeometry& geom, const CellField& field, double a_i) {
  const double gamma = geom.gamma_measure();
  if (!(gamma > 0.0)) throw GeometryError("assemble_a_i: |Gamma| vanishes");
  double val = a_i * linear_entry(geom, field, 0) / gamma;
  if (!(val > 0.0))
    throw NumericalError("assemble_a_i: nonpositive coefficient, field under-converged",
                         val);
  return val;
}

QuadraticFormCheck quadratic_form_check(const CellGeometry& geom,
                                        const CellField& field, double a) {
  const double gamma = geom.gamma_measure();
  QuadraticFormCheck c;
  c.linear_form = a * linear_entry(geom, field, field.k) / gamma;
  double energy = 0.0;
  for_corrected_faces(geom, field,
                      [&](int, double grad, double w) { energy += grad * grad * w; });
  c.quadratic_form = a * energy / gamma;
  double denom = std::max(std::abs(c.linear_form), std::abs(c.quadratic_form));
  c.rel_difference =
      denom > 0.0 ? std::abs(c.linear_form - c.quadratic_form) / denom : 0.0;
  return c;
}

void save_effective_model(const EffectiveModel& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  char buf[640];
  std::snprintf(buf, sizeof(buf),
                "# fascicle effective model\n"
                "version = 1\n"
                "a_i_eff = %.17g\n"
                "a_e_eff = %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n"
                "gamma_density = %.17g\n"
                "c_m = %.17g\n"
                "theta = %.17g\n"
                "a = %.17g\n"
                "b = %.17g\n"
                "boundary_scale = %.17g\n"
                "vol_Y = %.17g\n"
                "vol_intra = %.17g\n"
                "gamma_area = %.17g\n",
                m.a_i_eff, m.a_e_eff[0][0], m.a_e_eff[0][1], m.a_e_eff[0][2],
                m.a_e_eff[1][0], m.a_e_eff[1][1], m.a_e_eff[1][2], m.a_e_eff[2][0],
                m.a_e_eff[2][1], m.a_e_eff[2][2], m.gamma_density, m.c_m, m.fhn.theta,
                m.fhn.a, m.fhn.b, m.boundary_scale, m.vol_Y, m.vol_intra,
                m.gamma_area);
  f << buf;
}

EffectiveModel load_effective_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open effective model: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad model file line: " + line);
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
    };
    strip(key);
    strip(val);
    kv[key] = val;
  }
  auto need = [&](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("model file missing key: " + key);
    return it->second;
  };
  if (need("version") != "1") throw ConfigError("unsupported model file version");
  EffectiveModel m;
  m.a_i_eff = std::stod(need("a_i_eff"));
  {
    std::istringstream is(need("a_e_eff"));
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l)
        if (!(is >> m.a_e_eff[k][l]))
          throw ConfigError("model file: a_e_eff needs 9 row-major entries");
  }
  m.gamma_density = std::stod(need("gamma_density"));
  m.c_m = std::stod(need("c_m"));
  m.fhn.theta = std::stod(need("theta"));
  m.fhn.a = std::stod(need("a"));
  m.fhn.b = std::stod(need("b"));
  m.fhn.c_m = m.c_m;
  m.boundary_scale = std::stod(need("boundary_scale"));
  if (kv.count("vol_Y")) m.vol_Y = std::stod(kv["vol_Y"]);
  if (kv.count("vol_intra")) m.vol_intra = std::stod(kv["vol_intra"]);
  if (kv.count("gamma_area")) m.gamma_area = std::stod(kv["gamma_area"]);
  m.validate();
  return m;
}

}  // namespace fasc
