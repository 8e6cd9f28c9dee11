#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fascicle/errors.hpp"

namespace fasc {

enum class Region : std::uint8_t { Intra = 0, Myelin = 1, Extra = 2 };

enum class Surface { Gamma, GammaMI, GammaME };

/// Canonical periodicity cell: axon core of radius r0 along y1, myelin
/// annulus up to r_m outside the Ranvier band, extracellular elsewhere.
/// Y = [-1/2,1/2) x [-R0,R0)^2, Ranvier band |y1| < w_node/2 on r = r0.
struct CellParams {
  double r0 = 0.25;
  double R0 = 0.5;
  double r_m = 0.35;
  double w_node = 0.2;
  int grid_n = 64;

  void validate() const;
};

/// One voxel face on an interface. `dir` is the axis (0,1,2), `normal` the
/// outward unit normal of the inner region (Intra for Gamma/GammaMI,
/// Myelin for GammaME); axis-aligned, so one component is +-1.
struct InterfaceFace {
  int inner_voxel;
  int outer_voxel;
  int dir;
  std::array<double, 3> normal;
  double area;
};

struct CellGeometry {
  std::optional<CellParams> params;  // absent for user-supplied label grids
  int n1 = 0, n2 = 0, n3 = 0;
  double h1 = 0.0, h2 = 0.0, h3 = 0.0;
  std::vector<Region> labels;  // index = i1 + n1*(i2 + n2*i3)

  std::vector<InterfaceFace> gamma;     // intra <-> extra
  std::vector<InterfaceFace> gamma_mi;  // intra <-> myelin
  std::vector<InterfaceFace> gamma_me;  // myelin <-> extra

  double vol_Y = 0.0;
  double vol_intra = 0.0, vol_myelin = 0.0, vol_extra = 0.0;  // discrete
  double gamma_area_discrete = 0.0;

  // Closed forms; present only for the canonical cylinder geometry.
  std::optional<double> vol_intra_analytic;
  std::optional<double> gamma_area_analytic;

  int index(int i1, int i2, int i3) const { return i1 + n1 * (i2 + n2 * i3); }
  Region label(int i1, int i2, int i3) const { return labels[index(i1, i2, i3)]; }
  std::size_t voxel_count() const { return labels.size(); }
  double voxel_volume() const { return h1 * h2 * h3; }
  std::array<double, 3> center(int i1, int i2, int i3) const;

  /// |Gamma| used for effective-coefficient normalization: analytic for the
  /// canonical geometry, staircase measure otherwise.
  double gamma_measure() const {
    return gamma_area_analytic ? *gamma_area_analytic : gamma_area_discrete;
  }

  const std::vector<InterfaceFace>& faces(Surface s) const;
};

CellGeometry build_cell(const CellParams& params);

/// Build from an explicit label grid (user-supplied microstructure).
CellGeometry build_cell_from_labels(int n1, int n2, int n3, double h1, double h2,
                                    double h3, std::vector<Region> labels);

struct WeightedFace {
  std::array<double, 3> normal;
  double weight;  // face area
};

/// Faces with outward normals whose weights sum to the discrete surface
/// measure. Surface::GammaMI and GammaME select the myelin interfaces.
std::vector<WeightedFace> surface_quadrature(const CellGeometry& geom, Surface s);

/// Label-grid binary file: 24-byte header (magic "FCLG", u32 version,
/// u32 n1,n2,n3) followed by 3 f64 spacings and n1*n2*n3 bytes, y1-fastest.
void save_label_grid(const CellGeometry& geom, const std::string& path);
CellGeometry load_label_grid(const std::string& path);

}  // namespace fasc
