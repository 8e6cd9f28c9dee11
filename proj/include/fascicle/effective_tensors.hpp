#pragma once

#include <array>
#include <string>

#include "fascicle/cell_solver.hpp"
#include "fascicle/geometry.hpp"
#include "fascicle/membrane.hpp"

namespace fasc {

using Tensor3 = std::array<std::array<double, 3>, 3>;

/// Homogenized coefficients plus the membrane constants the macro solver
/// needs. boundary_scale is the |Y|/|Gamma| factor applied to the lateral
/// flux J^e (see the model-file docs for the normalization choice).
struct EffectiveModel {
  double a_i_eff = 0.0;
  Tensor3 a_e_eff{};
  double gamma_density = 0.0;  // |Gamma| / |Y|
  double c_m = 1.0;
  FhnParams fhn;
  double boundary_scale = 1.0;

  // Microscale bookkeeping carried along for the ladder oracle.
  double vol_Y = 1.0;
  double vol_intra = 0.0;
  double gamma_area = 0.0;

  void validate() const;
};

struct TensorAssembly {
  Tensor3 tensor{};        // symmetrized
  double asymmetry = 0.0;  // ||A - A^T|| / ||A||
};

/// (a_e^eff)_{kl} = (1/|Gamma|) int_{Y_e} a_e (d_l N_k + delta_kl) dy with
/// face-centered differences matching the finite-volume fluxes.
TensorAssembly assemble_a_e(const CellGeometry& geom,
                            const std::array<CellField, 3>& fields, double a_e,
                            double solver_tol = 1e-8);

/// a_i^eff = (1/|Gamma|) int_{Y_i} a_i (d_1 N_1^i + 1) dy.
double assemble_a_i(const CellGeometry& geom, const CellField& field, double a_i);

struct QuadraticFormCheck {
  double linear_form = 0.0;
  double quadratic_form = 0.0;
  double rel_difference = 0.0;
};

/// Compares the linear-form and energy-form assemblies of the same
/// effective entry; they agree up to solver tolerance by construction.
QuadraticFormCheck quadratic_form_check(const CellGeometry& geom,
                                        const CellField& field, double a);

void save_effective_model(const EffectiveModel& m, const std::string& path);
EffectiveModel load_effective_model(const std::string& path);

}  // namespace fasc
