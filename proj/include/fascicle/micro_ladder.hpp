#pragma once

#include <span>
#include <string>
#include <vector>

#include "fascicle/macro_bidomain.hpp"

namespace fasc {

/// Cell-resolved ladder network on [0,L]: one membrane node per period of
/// length eps, centered at x_j = (j + 1/2) eps, rails tied to the grounded
/// walls through half-spacing links. Shares state, stimulus and scheme
/// types with the macro solver; the interval stimulus acts as the same
/// distributed extracellular source density.
struct LadderScenario {
  double L = 1.0;
  double eps = 1.0 / 16.0;
  EffectiveModel model;
  StimulusSpec stim;
  Scheme scheme = Scheme::Imex;
  double dt = 1e-3;
  double T = 1.0;
  double lambda = 0.0;  // 0 picks lambda_min
  bool linear_ion = false;
  bool keep_history = false;
  double tol = 1e-10;
  double newton_tol = 1e-10;
};

class LadderProblem {
 public:
  LadderProblem(const EffectiveModel& model, double L, double eps,
                bool linear_ion = false);

  int cells() const { return m_; }
  double eps() const { return eps_; }
  double x(int j) const { return (j + 0.5) * eps_; }

  MacroState step_imex(const MacroState& s, const StimulusSpec& stim, double dt,
                       double tol = 1e-10) const;
  MacroState step_implicit(const MacroState& s, const StimulusSpec& stim, double dt,
                           double lambda, double newton_tol = 1e-10) const;
  double dt_max(std::span<const double> v) const;
  MacroState rest_state(double tol = 1e-12) const;

  Trajectory run(const LadderScenario& cfg) const;

 private:
  EffectiveModel model_;
  bool linear_ion_ = false;
  double L_ = 0.0, eps_ = 0.0;
  int m_ = 0;
  std::vector<Triplet> ti_, te_;
  SparseOperator ki_, ksum_;

  double ionic(double v, double g) const;
  double ionic_dv(double v) const;
  std::vector<double> source_load(const StimulusSpec& stim, double t) const;
  void solve_rails(std::span<const double> v, const std::vector<double>& load,
                   std::vector<double>& ue, double tol) const;
  double steady_residual(const MacroState& s) const;
};

struct ConvergeRow {
  double eps = 0.0;
  double err_v_l2 = 0.0;     // space-time L2 of v against the reference
  double err_v_final = 0.0;  // spatial L2 at the final time
  double err_ui = 0.0;       // space-time L2 of u_i
  double err_ue = 0.0;       // space-time L2 of u_e
};

struct ConvergeStudy {
  std::vector<ConvergeRow> rows;
  // Error ratios between consecutive refinements, coarse over fine.
  std::vector<double> ratio_v_l2, ratio_v_final, ratio_ui, ratio_ue;
};

/// Runs the ladder at each eps and a node-centered reference on `ref_nx`
/// nodes with the shared time step, then tabulates the errors at the
/// ladder nodes (reference linearly interpolated).
ConvergeStudy converge_study(const LadderScenario& base,
                             std::span<const double> eps_list, int ref_nx);

void save_converge_csv(const ConvergeStudy& study, const std::string& path);

}  // namespace fasc
