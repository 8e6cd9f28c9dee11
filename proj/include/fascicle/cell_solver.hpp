#pragma once

#include <string>
#include <vector>

#include "fascicle/geometry.hpp"
#include "fascicle/numerics.hpp"

namespace fasc {

/// Voxel <-> unknown numbering for one subdomain of the cell.
struct SubdomainMap {
  Region region;
  std::vector<int> unknown_of_voxel;  // -1 outside the subdomain
  std::vector<int> voxel_of_unknown;
  int count() const { return static_cast<int>(voxel_of_unknown.size()); }
};

SubdomainMap subdomain_map(const CellGeometry& geom, Region region);

/// Corrector field of one cell problem, zero-mean over its subdomain.
struct CellField {
  Region region;
  int k = 0;  // driving coordinate, 0-based
  SubdomainMap map;
  std::vector<double> values;

  double at_voxel(int voxel) const {
    int u = map.unknown_of_voxel[voxel];
    return u >= 0 ? values[u] : 0.0;
  }
};

/// Periodic Laplace problem on Y_e with Neumann data -nu_k on Gamma u Gamma_me,
/// Y-periodic in all three coordinates. k is 1-based (1|2|3) as in the driving
/// direction e_k.
CellField solve_cell_e(const CellGeometry& geom, int k, double tol = 1e-8,
                       int threads = 1);

/// Periodic Laplace problem on Y_i with Neumann data -nu_1 on Gamma u Gamma_mi,
/// 1-periodic in y1.
CellField solve_cell_i(const CellGeometry& geom, double tol = 1e-8, int threads = 1);

/// Relative discrete residual of a field against its own finite-volume system.
double residual(const CellField& field, const CellGeometry& geom);

/// CSV dump: voxel index, y1, y2, y3, value.
void dump_cell_field_csv(const CellField& field, const CellGeometry& geom,
                         const std::string& path);

/// VTK legacy structured-points dump (value 0 outside the subdomain).
void dump_cell_field_vtk(const CellField& field, const CellGeometry& geom,
                         const std::string& path);

}  // namespace fasc
