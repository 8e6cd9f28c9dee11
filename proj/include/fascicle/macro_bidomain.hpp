#pragma once

#include <span>
#include <string>
#include <vector>

#include "fascicle/effective_tensors.hpp"
#include "fascicle/membrane.hpp"
#include "fascicle/numerics.hpp"

namespace fasc {

enum class MeshMode { Interval, Box };

/// Uniform node mesh on [0,L] (interval) or [0,L]x[0,Ly]x[0,Lz] (box).
/// The x1-extremal node layers are the Dirichlet bases S0, SL; in box mode
/// the remaining boundary is the lateral surface Sigma.
struct MacroMesh {
  MeshMode mode = MeshMode::Interval;
  double L = 1.0, Ly = 0.0, Lz = 0.0;
  int nx = 0, ny = 1, nz = 1;
  double hx = 0.0, hy = 0.0, hz = 0.0;

  static MacroMesh interval(double L, int nx);
  static MacroMesh box(double L, double Ly, double Lz, int nx, int ny, int nz);

  int nodes() const { return nx * ny * nz; }
  int index(int ix, int iy, int iz) const { return ix + nx * (iy + ny * iz); }
  bool is_base(int node) const {
    int ix = node % nx;
    return ix == 0 || ix == nx - 1;
  }
  double x1(int ix) const { return ix * hx; }
  // Dual-cell weight along one axis (half cells at the ends).
  static double axis_weight(int i, int n, double h) {
    return (i == 0 || i == n - 1) ? 0.5 * h : h;
  }
  double node_volume(int node) const;
};

struct MacroState {
  double t = 0.0;
  std::vector<double> v, g, u_i, u_e;
};

enum class StimulusProfile { None, Constant, Pulse, GaussianTime };

/// J^e on Sigma in box mode; the equivalent distributed extracellular
/// source density s(t,x) in interval mode. Separable: amplitude *
/// time_factor(t) * axial_profile(x1).
struct StimulusSpec {
  StimulusProfile profile = StimulusProfile::None;
  double amplitude = 0.0;
  double t_on = 0.0, t_off = 0.0;  // pulse window
  double t0 = 0.0, sigma_t = 1.0;  // gaussian-in-time
  double x0 = 0.0, sigma_x = 0.0;  // axial gaussian; sigma_x <= 0: uniform

  void validate() const;
  double value(double t, double x1) const;
};

enum class Scheme { Imex, Implicit };

struct ScenarioConfig {
  MacroMesh mesh;
  EffectiveModel model;
  StimulusSpec stim;
  Scheme scheme = Scheme::Imex;
  double dt = 1e-3;
  double T = 1.0;
  double lambda = 0.0;  // implicit scheme shift; 0 picks lambda_min
  bool linear_ion = false;  // replace I_ion by -v (linear cross-validation)
  int snapshot_every = 0;   // steps between retained snapshots; 0 = none
  bool keep_history = false;  // retain v, u_i, u_e at every step
  double elliptic_tol = 1e-8;
  double newton_tol = 1e-10;
  int threads = 1;
  std::vector<double> v0, g0;  // empty: start from the discrete rest state
};

struct EnergyRecord {
  double t = 0.0;
  double E = 0.0;  // ||v||^2 + ||g||^2
  double D = 0.0;  // W0 energy of v plus the L4 reaction term
  double S = 0.0;  // ||J^e||^2 on Sigma (or the source-density analog)
};

struct Trajectory {
  std::vector<double> times;
  std::vector<EnergyRecord> energy;
  std::vector<MacroState> snapshots;
  MacroState final_state;
  // Per-step fields, retained when keep_history is set.
  std::vector<std::vector<double>> v_history, ui_history, ue_history;
};

/// Discrete operators shared by every macro operation. Assembled once per
/// (mesh, model); immutable afterwards.
class MacroProblem {
 public:
  MacroProblem(const MacroMesh& mesh, const EffectiveModel& model,
               bool linear_ion = false, int threads = 1);

  const MacroMesh& mesh() const { return mesh_; }
  const EffectiveModel& model() const { return model_; }

  /// Pair problem: given v (zero on the bases) and the stimulus at time t,
  /// returns (u_i, u_e) with u_i - u_e = v.
  void elliptic_solve(std::span<const double> v, const StimulusSpec& stim, double t,
                      std::vector<double>& u_i, std::vector<double>& u_e,
                      double tol = 1e-8) const;

  /// Action of the (positive semidefinite) transmembrane operator:
  /// A_eff v = -a_i_eff d11 u_i with the J = 0 pair solve, so that
  /// <A_eff v, v> is the W0 energy of v.
  std::vector<double> apply_A_eff(std::span<const double> v,
                                  double tol = 1e-10) const;

  /// Auxiliary lifting q0 carrying the lateral flux; box mode only.
  std::vector<double> lift_boundary(const StimulusSpec& stim, double t,
                                    double tol = 1e-10) const;

  MacroState step_imex(const MacroState& s, const StimulusSpec& stim, double dt,
                       double tol = 1e-8) const;
  MacroState step_implicit(const MacroState& s, const StimulusSpec& stim, double dt,
                           double lambda, double newton_tol = 1e-10) const;

  /// Largest stable IMEX step for the current membrane state (safety 0.5).
  double dt_max(std::span<const double> v) const;

  /// Discrete steady state with zero stimulus, seeded from the pointwise
  /// FHN rest point and polished by long backward-Euler steps.
  MacroState rest_state(double tol = 1e-12) const;

  double mesh_inner(std::span<const double> a, std::span<const double> b) const;
  double mesh_norm(std::span<const double> a) const;

  /// max_j |(u_i - u_e) - v|
  static double jump_residual(const MacroState& s);
  /// Residual of the shared elliptic constraint (both faces of the
  /// bidomain identity) at the state's time, relative to the load scale.
  double elliptic_residual(const MacroState& s, const StimulusSpec& stim) const;

  EnergyRecord energy_record(const MacroState& s, const StimulusSpec& stim) const;

  Trajectory run(const ScenarioConfig& cfg) const;

 private:
  MacroMesh mesh_;
  EffectiveModel model_;
  bool linear_ion_ = false;
  int threads_ = 1;
  int n_free_ = 0;
  std::vector<int> free_of_node_, node_of_free_;
  std::vector<double> vol_;  // per free unknown
  std::vector<Triplet> ti_, te_;
  SparseOperator ki_, ksum_;

  double ionic(double v, double g) const;
  double ionic_dv(double v) const;
  std::vector<double> flux_load(const StimulusSpec& stim, double t) const;
  std::vector<double> gather(std::span<const double> full) const;
  void scatter(std::span<const double> red, std::vector<double>& full) const;
  void solve_potentials(std::span<const double> v_red,
                        const std::vector<double>& load, std::vector<double>& ue_red,
                        double tol) const;
  friend struct MacroProblemTestAccess;
};

/// Smallest C >= 0 with E(t) <= (E(0) + C * sum S dt) * e^{C t} for every
/// step; throws NumericalError if no C below `cap` certifies the run.
double fit_gronwall_constant(const std::vector<EnergyRecord>& records, double dt,
                             double cap = 1e3);

}  // namespace fasc
