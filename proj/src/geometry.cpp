#include "fascicle/geometry.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace fasc {

void CellParams::validate() const {
  if (!(r0 >= 0.0) || !(R0 > 0.0) || !(r_m >= r0))
    throw ConfigError("cell params: need 0 <= r0 <= r_m and R0 > 0");
  if (r0 > 0.0 && !(r0 < 0.5)) throw ConfigError("cell params: r0 must be < 1/2");
  if (r_m >= R0)
    throw ConfigError("cell params: r_m >= R0 disconnects the extracellular region");
  if (!(w_node > 0.0) || w_node > 1.0)
    throw ConfigError("cell params: w_node must lie in (0, 1]; w_node = 0 degenerates Gamma");
  if (grid_n < 8) throw ConfigError("cell params: grid_n must be >= 8");
}

std::array<double, 3> CellGeometry::center(int i1, int i2, int i3) const {
  double R0y = 0.5 * n2 * h2;
  double R0z = 0.5 * n3 * h3;
  return {-0.5 * n1 * h1 + (i1 + 0.5) * h1, -R0y + (i2 + 0.5) * h2,
          -R0z + (i3 + 0.5) * h3};
}

const std::vector<InterfaceFace>& CellGeometry::faces(Surface s) const {
  switch (s) {
    case Surface::Gamma:
      return gamma;
    case Surface::GammaMI:
      return gamma_mi;
    default:
      return gamma_me;
  }
}

namespace {

void collect_faces(CellGeometry& g) {
  const int n[3] = {g.n1, g.n2, g.n3};
  const double h[3] = {g.h1, g.h2, g.h3};
  const double face_area[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};
  for (int i3 = 0; i3 < g.n3; ++i3)
    for (int i2 = 0; i2 < g.n2; ++i2)
      for (int i1 = 0; i1 < g.n1; ++i1) {
        int idx[3] = {i1, i2, i3};
        int p = g.index(i1, i2, i3);
        for (int d = 0; d < 3; ++d) {
          int nb[3] = {idx[0], idx[1], idx[2]};
          nb[d] = (nb[d] + 1) % n[d];  // periodic tiling in all coordinates
          int q = g.index(nb[0], nb[1], nb[2]);
          Region lp = g.labels[p], lq = g.labels[q];
          if (lp == lq) continue;
          // Orient the face outward from the inner region (Intra, else Myelin).
          auto rank = [](Region r) { return static_cast<int>(r); };
          bool p_inner = rank(lp) < rank(lq);
          InterfaceFace f;
          f.inner_voxel = p_inner ? p : q;
          f.outer_voxel = p_inner ? q : p;
          f.dir = d;
          f.normal = {0.0, 0.0, 0.0};
          f.normal[d] = p_inner ? 1.0 : -1.0;
          f.area = face_area[d];
          Region inner = p_inner ? lp : lq;
          Region outer = p_inner ? lq : lp;
          if (inner == Region::Intra && outer == Region::Extra)
            g.gamma.push_back(f);
          else if (inner == Region::Intra && outer == Region::Myelin)
            g.gamma_mi.push_back(f);
          else
            g.gamma_me.push_back(f);
        }
      }
  for (const auto& f : g.gamma) g.gamma_area_discrete += f.area;
}

void compute_measures(CellGeometry& g) {
  double vol = g.voxel_volume();
  for (Region r : g.labels) {
    if (r == Region::Intra)
      g.vol_intra += vol;
    else if (r == Region::Myelin)
      g.vol_myelin += vol;
    else
      g.vol_extra += vol;
  }
  g.vol_Y = vol * static_cast<double>(g.voxel_count());
}

}  // namespace

CellGeometry build_cell(const CellParams& params) {
  params.validate();
  CellGeometry g;
  g.params = params;
  g.n1 = params.grid_n;
  g.n2 = g.n3 = std::max(1, static_cast<int>(std::lround(2.0 * params.R0 * params.grid_n)));
  g.h1 = 1.0 / g.n1;
  g.h2 = g.h3 = 2.0 * params.R0 / g.n2;
  g.labels.resize(static_cast<std::size_t>(g.n1) * g.n2 * g.n3, Region::Extra);

  const bool has_myelin = params.r_m > params.r0;
  for (int i3 = 0; i3 < g.n3; ++i3)
    for (int i2 = 0; i2 < g.n2; ++i2)
      for (int i1 = 0; i1 < g.n1; ++i1) {
        auto c = g.center(i1, i2, i3);
        double r = std::hypot(c[1], c[2]);
        Region lab = Region::Extra;
        if (params.r0 > 0.0 && r < params.r0)
          lab = Region::Intra;
        else if (has_myelin && r < params.r_m && std::abs(c[0]) >= 0.5 * params.w_node)
          lab = Region::Myelin;
        g.labels[g.index(i1, i2, i3)] = lab;
      }

  compute_measures(g);
  collect_faces(g);

  if (params.r0 > 0.0) {
    g.vol_intra_analytic = M_PI * params.r0 * params.r0;
    // With no myelin the whole lateral surface is a Ranvier node.
    double band = has_myelin ? params.w_node : 1.0;
    g.gamma_area_analytic = 2.0 * M_PI * params.r0 * band;
    if (g.gamma.empty())
      throw GeometryError("Gamma degenerates on this grid; refine grid_n or widen w_node");
  }
  return g;
}

CellGeometry build_cell_from_labels(int n1, int n2, int n3, double h1, double h2,
                                    double h3, std::vector<Region> labels) {
  if (n1 <= 0 || n2 <= 0 || n3 <= 0 ||
      labels.size() != static_cast<std::size_t>(n1) * n2 * n3)
    throw ConfigError("label grid: dimensions do not match label count");
  if (!(h1 > 0.0) || !(h2 > 0.0) || !(h3 > 0.0))
    throw ConfigError("label grid: spacings must be positive");
  CellGeometry g;
  g.n1 = n1;
  g.n2 = n2;
  g.n3 = n3;
  g.h1 = h1;
  g.h2 = h2;
  g.h3 = h3;
  g.labels = std::move(labels);
  compute_measures(g);
  collect_faces(g);
  return g;
}

std::vector<WeightedFace> surface_quadrature(const CellGeometry& geom, Surface s) {
  std::vector<WeightedFace> out;
  out.reserve(geom.faces(s).size());
  for (const auto& f : geom.faces(s)) out.push_back({f.normal, f.area});
  return out;
}

void save_label_grid(const CellGeometry& geom, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  const char magic[4] = {'F', 'C', 'L', 'G'};
  std::uint32_t version = 1;
  std::uint32_t dims[3] = {static_cast<std::uint32_t>(geom.n1),
                           static_cast<std::uint32_t>(geom.n2),
                           static_cast<std::uint32_t>(geom.n3)};
  double h[3] = {geom.h1, geom.h2, geom.h3};
  f.write(magic, 4);
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(dims), 12);
  f.write(reinterpret_cast<const char*>(h), 24);
  f.write(reinterpret_cast<const char*>(geom.labels.data()),
          static_cast<std::streamsize>(geom.labels.size()));
  if (!f) throw ConfigError("short write: " + path);
}

CellGeometry load_label_grid(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open label grid: " + path);
  char magic[4];
  std::uint32_t version = 0, dims[3];
  double h[3];
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(dims), 12);
  f.read(reinterpret_cast<char*>(h), 24);
  if (!f || std::memcmp(magic, "FCLG", 4) != 0)
    throw ConfigError("bad label grid header: " + path);
  if (version != 1) throw ConfigError("unsupported label grid version");
  std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  std::vector<Region> labels(count);
  f.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count));
  if (!f) throw ConfigError("truncated label grid: " + path);
  for (Region r : labels)
    if (static_cast<int>(r) > 2) throw ConfigError("invalid region tag in label grid");
  return build_cell_from_labels(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                                static_cast<int>(dims[2]), h[0], h[1], h[2],
                                std::move(labels));
}

}  // namespace fasc
