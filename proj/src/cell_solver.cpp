#include "fascicle/cell_solver.hpp"

#include <cmath>
#include <fstream>
#include <queue>

namespace fasc {

SubdomainMap subdomain_map(const CellGeometry& geom, Region region) {
  SubdomainMap m;
  m.region = region;
  m.unknown_of_voxel.assign(geom.voxel_count(), -1);
  for (std::size_t v = 0; v < geom.voxel_count(); ++v)
    if (geom.labels[v] == region) {
      m.unknown_of_voxel[v] = m.count();
      m.voxel_of_unknown.push_back(static_cast<int>(v));
    }
  return m;
}

namespace {

struct StencilSystem {
  SparseOperator op;
  std::vector<double> rhs;
};

// Neighbor in +-d with the periodicity rule of the subdomain; returns -1 at a
// non-periodic grid boundary.
int neighbor(const CellGeometry& g, int i1, int i2, int i3, int d, int step,
             bool wrap_all) {
  int idx[3] = {i1, i2, i3};
  const int n[3] = {g.n1, g.n2, g.n3};
  idx[d] += step;
  if (idx[d] < 0 || idx[d] >= n[d]) {
    if (d != 0 && !wrap_all) return -1;
    idx[d] = (idx[d] + n[d]) % n[d];
  }
  return g.index(idx[0], idx[1], idx[2]);
}

void check_connected(const CellGeometry& g, const SubdomainMap& m, bool wrap_all) {
  if (m.count() == 0) return;
  std::vector<char> seen(m.count(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    int v = m.voxel_of_unknown[u];
    int i3 = v / (g.n1 * g.n2);
    int i2 = (v / g.n1) % g.n2;
    int i1 = v % g.n1;
    for (int d = 0; d < 3; ++d)
      for (int step : {-1, 1}) {
        int nb = neighbor(g, i1, i2, i3, d, step, wrap_all);
        if (nb < 0) continue;
        int un = m.unknown_of_voxel[nb];
        if (un >= 0 && !seen[un]) {
          seen[un] = 1;
          ++reached;
          q.push(un);
        }
      }
  }
  if (reached != m.count())
    throw GeometryError("subdomain is disconnected on the voxel grid");
}

StencilSystem assemble(const CellGeometry& g, const SubdomainMap& m, int k0,
                       bool wrap_all) {
  const double h[3] = {g.h1, g.h2, g.h3};
  const double face_area[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(m.count()) * 7);
  std::vector<double> rhs(m.count(), 0.0);
  for (int u = 0; u < m.count(); ++u) {
    int v = m.voxel_of_unknown[u];
    int i3 = v / (g.n1 * g.n2);
    int i2 = (v / g.n1) % g.n2;
    int i1 = v % g.n1;
    for (int d = 0; d < 3; ++d)
      for (int step : {-1, 1}) {
        int nb = neighbor(g, i1, i2, i3, d, step, wrap_all);
        int un = nb >= 0 ? m.unknown_of_voxel[nb] : -1;
        double w = face_area[d] / h[d];
        if (un >= 0) {
          trip.push_back({u, u, w});
          trip.push_back({u, un, -w});
        } else if (nb >= 0) {
          // Interface face: Neumann datum -nu_k with nu the outward normal
          // of the subdomain (nu_k = step * delta_{k d}).
          if (d == k0) rhs[u] -= static_cast<double>(step) * face_area[d];
        }
        // nb < 0: non-periodic box boundary without interface; zero flux.
      }
  }
  StencilSystem s{SparseOperator::from_triplets(m.count(), std::move(trip),
                                                Nullspace::Constants),
                  std::move(rhs)};
  return s;
}

CellField solve(const CellGeometry& geom, Region region, int k0, double tol,
                int threads, bool wrap_all) {
  if (tol <= 0.0) throw ConfigError("cell solve: tol must be positive");
  SubdomainMap m = subdomain_map(geom, region);
  check_connected(geom, m, wrap_all);

  CellField f;
  f.region = region;
  f.k = k0;
  f.map = std::move(m);
  if (f.map.count() == 0) return f;

  StencilSystem sys = assemble(geom, f.map, k0, wrap_all);

  // Discrete divergence theorem on a closed voxel surface: the Neumann load
  // must have zero total before the constant-nullspace projection.
  double total = 0.0, scale = 0.0;
  for (double b : sys.rhs) {
    total += b;
    scale += std::abs(b);
  }
  if (scale > 0.0 && std::abs(total) > 1e-10 * scale)
    throw GeometryError("Neumann compatibility violated: net flux " +
                        std::to_string(total));

  CgOptions opts;
  opts.tol = tol;
  opts.threads = threads;
  CgResult r = cg_solve(sys.op, sys.rhs, opts);
  f.values = std::move(r.x);
  project_zero_mean(f.values);
  return f;
}

}  // namespace

CellField solve_cell_e(const CellGeometry& geom, int k, double tol, int threads) {
  if (k < 1 || k > 3) throw ConfigError("solve_cell_e: k must be 1, 2 or 3");
  return solve(geom, Region::Extra, k - 1, tol, threads, /*wrap_all=*/true);
}

CellField solve_cell_i(const CellGeometry& geom, double tol, int threads) {
  return solve(geom, Region::Intra, 0, tol, threads, /*wrap_all=*/false);
}

double residual(const CellField& field, const CellGeometry& geom) {
  if (field.map.count() == 0) return 0.0;
  bool wrap_all = field.region == Region::Extra;
  StencilSystem sys = assemble(geom, field.map, field.k, wrap_all);
  std::vector<double> rhs = sys.rhs;
  project_zero_mean(rhs);
  std::vector<double> ax(field.values.size());
  sys.op.apply(field.values, ax);
  double num = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) {
    double d = ax[i] - rhs[i];
    num += d * d;
  }
  double den = dot(rhs, rhs);
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

void dump_cell_field_csv(const CellField& field, const CellGeometry& geom,
                         const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "voxel,y1,y2,y3,value\n";
  char buf[160];
  for (int u = 0; u < field.map.count(); ++u) {
    int v = field.map.voxel_of_unknown[u];
    int i3 = v / (geom.n1 * geom.n2);
    int i2 = (v / geom.n1) % geom.n2;
    int i1 = v % geom.n1;
    auto c = geom.center(i1, i2, i3);
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", v, c[0], c[1],
                  c[2], field.values[u]);
    f << buf;
  }
}

void dump_cell_field_vtk(const CellField& field, const CellGeometry& geom,
                         const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "# vtk DataFile Version 3.0\ncell corrector field\nASCII\n"
    << "DATASET STRUCTURED_POINTS\n"
    << "DIMENSIONS " << geom.n1 << ' ' << geom.n2 << ' ' << geom.n3 << '\n'
    << "ORIGIN 0 0 0\n"
    << "SPACING " << geom.h1 << ' ' << geom.h2 << ' ' << geom.h3 << '\n'
    << "POINT_DATA " << geom.voxel_count() << "\nSCALARS value double 1\n"
    << "LOOKUP_TABLE default\n";
  for (std::size_t v = 0; v < geom.voxel_count(); ++v)
    f << field.at_voxel(static_cast<int>(v)) << '\n';
}

}  // namespace fasc
