#include "fascicle/micro_ladder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace fasc {

LadderProblem::LadderProblem(const EffectiveModel& model, double L, double eps,
                             bool linear_ion)
    : model_(model), linear_ion_(linear_ion), L_(L), eps_(eps) {
  model_.validate();
  if (!(L > 0.0) || !(eps > 0.0)) throw ConfigError("ladder: need L, eps > 0");
  double cells = L / eps;
  m_ = static_cast<int>(std::llround(cells));
  if (m_ < 4 || std::abs(cells - m_) > 1e-9 * cells)
    throw ConfigError("ladder: L must be an integer multiple (>= 4) of eps");

  auto rail = [&](std::vector<Triplet>& trip, double coef) {
    for (int j = 0; j + 1 < m_; ++j) {
      double g = coef / eps_;
      trip.push_back({j, j, g});
      trip.push_back({j + 1, j + 1, g});
      trip.push_back({j, j + 1, -g});
      trip.push_back({j + 1, j, -g});
    }
    // Half-spacing links to the grounded walls.
    trip.push_back({0, 0, 2.0 * coef / eps_});
    trip.push_back({m_ - 1, m_ - 1, 2.0 * coef / eps_});
  };
  rail(ti_, model_.a_i_eff);
  rail(te_, model_.a_e_eff[0][0]);
  ki_ = SparseOperator::from_triplets(m_, ti_);
  std::vector<Triplet> sum = ti_;
  sum.insert(sum.end(), te_.begin(), te_.end());
  ksum_ = SparseOperator::from_triplets(m_, std::move(sum));
}

double LadderProblem::ionic(double v, double g) const {
  return linear_ion_ ? -v : ionic_current(v, g);
}

double LadderProblem::ionic_dv(double v) const {
  return linear_ion_ ? -1.0 : v * v - 1.0;
}

std::vector<double> LadderProblem::source_load(const StimulusSpec& stim,
                                               double t) const {
  std::vector<double> load(m_, 0.0);
  if (stim.profile == StimulusProfile::None || stim.amplitude == 0.0) return load;
  for (int j = 0; j < m_; ++j) load[j] = stim.value(t, x(j)) * eps_;
  return load;
}

void LadderProblem::solve_rails(std::span<const double> v,
                                const std::vector<double>& load,
                                std::vector<double>& ue, double tol) const {
  std::vector<double> rhs(m_);
  ki_.apply(v, rhs);
  for (int j = 0; j < m_; ++j) rhs[j] = load[j] - rhs[j];
  CgOptions opts;
  opts.tol = tol;
  opts.max_iter = std::max(2000, 4 * m_);
  ue = cg_solve(ksum_, rhs, opts).x;
}

double LadderProblem::dt_max(std::span<const double> v) const {
  double slope = 1.0;
  for (double x : v) slope = std::max(slope, std::abs(ionic_dv(x)));
  return 0.5 * model_.c_m / slope;
}

MacroState LadderProblem::step_imex(const MacroState& s, const StimulusSpec& stim,
                                    double dt, double tol) const {
  if (!(dt > 0.0)) throw ConfigError("ladder step_imex: dt must be positive");
  if (dt > dt_max(s.v))
    throw ConfigError("ladder step_imex: dt exceeds the stability bound");
  const double c_m = model_.c_m;

  MacroState out;
  out.t = s.t + dt;
  out.g.resize(m_);
  for (int j = 0; j < m_; ++j)
    out.g[j] = gating_exact_step(s.v[j], s.g[j], dt, model_.fhn);

  std::vector<Triplet> trip = ti_;
  for (const Triplet& tr : ti_) {
    trip.push_back({tr.row, tr.col + m_, tr.value});
    trip.push_back({tr.row + m_, tr.col, tr.value});
    trip.push_back({tr.row + m_, tr.col + m_, tr.value});
  }
  for (const Triplet& tr : te_) trip.push_back({tr.row + m_, tr.col + m_, tr.value});
  for (int j = 0; j < m_; ++j) trip.push_back({j, j, c_m / dt * eps_});
  SparseOperator block = SparseOperator::from_triplets(2 * m_, std::move(trip));

  std::vector<double> load = source_load(stim, s.t + dt);
  std::vector<double> rhs(2 * m_);
  for (int j = 0; j < m_; ++j) {
    rhs[j] = eps_ * (c_m / dt * s.v[j] - ionic(s.v[j], out.g[j]));
    rhs[j + m_] = load[j];
  }
  CgOptions opts;
  opts.tol = tol;
  opts.max_iter = std::max(4000, 8 * m_);
  std::vector<double> x = cg_solve(block, rhs, opts).x;

  out.v.assign(x.begin(), x.begin() + m_);
  out.u_e.assign(x.begin() + m_, x.end());
  out.u_i.resize(m_);
  for (int j = 0; j < m_; ++j) out.u_i[j] = out.u_e[j] + out.v[j];
  for (double y : out.v)
    if (!std::isfinite(y)) throw NumericalError("ladder step_imex: non-finite v");
  return out;
}

MacroState LadderProblem::step_implicit(const MacroState& s,
                                        const StimulusSpec& stim, double dt,
                                        double lambda, double newton_tol) const {
  if (!(dt > 0.0)) throw ConfigError("ladder step_implicit: dt must be positive");
  if (lambda + 1e-12 < lambda_min(model_.fhn))
    throw ConfigError("ladder step_implicit: lambda below lambda_min");
  const double c_m = model_.c_m;
  const double beta = 1.0 / dt + model_.fhn.b;
  const double t1 = s.t + dt;

  std::vector<double> load = source_load(stim, t1);
  std::vector<double> v = s.v, ue = s.u_e;
  if (static_cast<int>(ue.size()) != m_) ue.assign(m_, 0.0);

  auto g_new = [&](double vv, double gg) {
    return (gg / dt + model_.fhn.theta * vv + model_.fhn.a) / beta;
  };

  std::vector<double> rw(m_), ru(m_), kivu(m_), tmp(m_), sum(m_);
  auto residual_norm = [&]() {
    for (int j = 0; j < m_; ++j) sum[j] = v[j] + ue[j];
    ki_.apply(sum, kivu);
    for (int j = 0; j < m_; ++j) {
      double gn = g_new(v[j], s.g[j]);
      rw[j] = c_m * eps_ * ((v[j] - s.v[j]) / dt + ionic(v[j], gn) / c_m) + kivu[j];
    }
    ki_.apply(v, tmp);
    ksum_.apply(ue, ru);
    double nrm = 0.0;
    for (int j = 0; j < m_; ++j) {
      ru[j] += tmp[j] - load[j];
      double a = rw[j] / (c_m * eps_);
      double b = ru[j] / eps_;
      nrm += (a * a + b * b) * eps_;
    }
    return std::sqrt(nrm);
  };

  double res = residual_norm();
  const double accept = newton_tol * (1.0 + res);
  const double accept_loose = 1e-8 * (1.0 + res);
  int slow = 0;
  for (int it = 0; it < 50 && res > accept && slow < 3; ++it) {
    std::vector<Triplet> trip = ti_;
    for (const Triplet& tr : ti_) {
      trip.push_back({tr.row, tr.col + m_, tr.value});
      trip.push_back({tr.row + m_, tr.col, tr.value});
      trip.push_back({tr.row + m_, tr.col + m_, tr.value});
    }
    for (const Triplet& tr : te_)
      trip.push_back({tr.row + m_, tr.col + m_, tr.value});
    for (int j = 0; j < m_; ++j) {
      double dreac =
          linear_ion_ ? -1.0 : v[j] * v[j] - 1.0 - model_.fhn.theta / beta;
      trip.push_back({j, j, eps_ * (c_m / dt + dreac)});
    }
    SparseOperator jac = SparseOperator::from_triplets(2 * m_, std::move(trip));
    std::vector<double> rhs(2 * m_);
    for (int j = 0; j < m_; ++j) {
      rhs[j] = -rw[j];
      rhs[j + m_] = -ru[j];
    }
    CgOptions opts;
    opts.tol = 1e-13;
    opts.max_iter = std::max(4000, 8 * m_);
    std::vector<double> d = cg_solve(jac, rhs, opts).x;
    for (int j = 0; j < m_; ++j) {
      v[j] += d[j];
      ue[j] += d[j + m_];
    }
    double prev = res;
    res = residual_norm();
    slow = res > 0.5 * prev ? slow + 1 : 0;
  }
  if (res > accept && res > accept_loose)
    throw NumericalError("ladder step_implicit: Newton stalled", res);

  MacroState out;
  out.t = t1;
  out.v = v;
  out.u_e = ue;
  out.g.resize(m_);
  out.u_i.resize(m_);
  for (int j = 0; j < m_; ++j) {
    out.g[j] = g_new(v[j], s.g[j]);
    out.u_i[j] = ue[j] + v[j];
  }
  for (double y : out.v)
    if (!std::isfinite(y)) throw NumericalError("ladder step_implicit: non-finite v");
  return out;
}

double LadderProblem::steady_residual(const MacroState& s) const {
  std::vector<double> ue;
  solve_rails(s.v, std::vector<double>(m_, 0.0), ue, 1e-13);
  std::vector<double> ui(m_), av(m_);
  for (int j = 0; j < m_; ++j) ui[j] = ue[j] + s.v[j];
  ki_.apply(ui, av);
  double nrm = 0.0;
  for (int j = 0; j < m_; ++j) {
    double gst = (model_.fhn.theta * s.v[j] + model_.fhn.a) / model_.fhn.b;
    double r = av[j] / eps_ + ionic(s.v[j], gst) / model_.c_m;
    nrm += r * r * eps_;
  }
  return std::sqrt(nrm);
}

MacroState LadderProblem::rest_state(double tol) const {
  RestPoint rp = fhn_rest_point(model_.fhn);
  MacroState s;
  s.t = 0.0;
  s.v.assign(m_, rp.v);
  s.g.assign(m_, rp.g);
  s.u_e.assign(m_, 0.0);
  s.u_i = s.v;

  StimulusSpec none;
  const double lam = lambda_min(model_.fhn);
  double dt = 0.1 * model_.c_m;
  for (int it = 0; it < 400; ++it) {
    s = step_implicit(s, none, dt, lam, 1e-13);
    s.t = 0.0;
    if (steady_residual(s) <= tol) {
      for (int j = 0; j < m_; ++j)
        s.g[j] = (model_.fhn.theta * s.v[j] + model_.fhn.a) / model_.fhn.b;
      return s;
    }
    dt = std::min(2.0 * dt, 0.9 * model_.c_m);
  }
  throw NumericalError("ladder rest_state: pseudo-time iteration did not converge",
                       steady_residual(s));
}

Trajectory LadderProblem::run(const LadderScenario& cfg) const {
  if (!(cfg.dt > 0.0) || cfg.T < 0.0)
    throw ConfigError("ladder run: need dt > 0 and T >= 0");
  cfg.stim.validate();
  double lam = cfg.lambda > 0.0 ? cfg.lambda : lambda_min(model_.fhn);

  MacroState s = rest_state();
  Trajectory traj;
  auto record = [&](const MacroState& st) {
    traj.times.push_back(st.t);
    EnergyRecord rec;
    rec.t = st.t;
    for (int j = 0; j < m_; ++j)
      rec.E += (st.v[j] * st.v[j] + st.g[j] * st.g[j]) * eps_;
    traj.energy.push_back(rec);
    if (cfg.keep_history) {
      traj.v_history.push_back(st.v);
      traj.ui_history.push_back(st.u_i);
      traj.ue_history.push_back(st.u_e);
    }
  };
  record(s);
  int steps = static_cast<int>(std::llround(cfg.T / cfg.dt));
  for (int k = 0; k < steps; ++k) {
    s = cfg.scheme == Scheme::Imex
            ? step_imex(s, cfg.stim, cfg.dt, cfg.tol)
            : step_implicit(s, cfg.stim, cfg.dt, lam, cfg.newton_tol);
    record(s);
  }
  traj.final_state = s;
  return traj;
}

namespace {

double interp_nodes(const std::vector<double>& f, const MacroMesh& mesh, double x) {
  double s = x / mesh.hx;
  int i = std::clamp(static_cast<int>(s), 0, mesh.nx - 2);
  double w = s - i;
  return (1.0 - w) * f[i] + w * f[i + 1];
}

}  // namespace

ConvergeStudy converge_study(const LadderScenario& base,
                             std::span<const double> eps_list, int ref_nx) {
  if (eps_list.empty()) throw ConfigError("converge_study: empty eps list");
  MacroMesh ref_mesh = MacroMesh::interval(base.L, ref_nx);
  MacroProblem ref(ref_mesh, base.model, base.linear_ion);
  ScenarioConfig rc;
  rc.mesh = ref_mesh;
  rc.model = base.model;
  rc.stim = base.stim;
  rc.scheme = base.scheme;
  rc.dt = base.dt;
  rc.T = base.T;
  rc.lambda = base.lambda;
  rc.linear_ion = base.linear_ion;
  rc.keep_history = true;
  rc.elliptic_tol = base.tol;
  rc.newton_tol = base.newton_tol;
  Trajectory rt = ref.run(rc);

  ConvergeStudy study;
  for (double eps : eps_list) {
    LadderProblem lad(base.model, base.L, eps, base.linear_ion);
    LadderScenario lc = base;
    lc.eps = eps;
    lc.keep_history = true;
    Trajectory lt = lad.run(lc);
    if (lt.times.size() != rt.times.size())
      throw NumericalError("converge_study: trajectory length mismatch");

    ConvergeRow row;
    row.eps = eps;
    double acc_v = 0.0, acc_ui = 0.0, acc_ue = 0.0, final_v = 0.0;
    for (std::size_t k = 0; k < lt.times.size(); ++k) {
      double sv = 0.0, sui = 0.0, sue = 0.0;
      for (int j = 0; j < lad.cells(); ++j) {
        double x = lad.x(j);
        double dv = lt.v_history[k][j] - interp_nodes(rt.v_history[k], ref_mesh, x);
        double dui =
            lt.ui_history[k][j] - interp_nodes(rt.ui_history[k], ref_mesh, x);
        double due =
            lt.ue_history[k][j] - interp_nodes(rt.ue_history[k], ref_mesh, x);
        sv += dv * dv * eps;
        sui += dui * dui * eps;
        sue += due * due * eps;
      }
      double wt = (k == 0 || k + 1 == lt.times.size()) ? 0.5 * base.dt : base.dt;
      acc_v += sv * wt;
      acc_ui += sui * wt;
      acc_ue += sue * wt;
      if (k + 1 == lt.times.size()) final_v = std::sqrt(sv);
    }
    row.err_v_l2 = std::sqrt(acc_v);
    row.err_ui = std::sqrt(acc_ui);
    row.err_ue = std::sqrt(acc_ue);
    row.err_v_final = final_v;
    study.rows.push_back(row);
  }
  auto ratios = [&](auto member, std::vector<double>& out) {
    for (std::size_t i = 0; i + 1 < study.rows.size(); ++i) {
      double coarse = study.rows[i].*member, fine = study.rows[i + 1].*member;
      out.push_back(fine > 0.0 ? coarse / fine : std::numeric_limits<double>::infinity());
    }
  };
  ratios(&ConvergeRow::err_v_l2, study.ratio_v_l2);
  ratios(&ConvergeRow::err_v_final, study.ratio_v_final);
  ratios(&ConvergeRow::err_ui, study.ratio_ui);
  ratios(&ConvergeRow::err_ue, study.ratio_ue);
  return study;
}

void save_converge_csv(const ConvergeStudy& study, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "eps,err_v_l2,err_v_final,err_ui,err_ue,ratio_v_l2,ratio_v_final,ratio_ui,"
       "ratio_ue\n";
  char buf[320];
  for (std::size_t i = 0; i < study.rows.size(); ++i) {
    const ConvergeRow& r = study.rows[i];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g", r.eps,
                  r.err_v_l2, r.err_v_final, r.err_ui, r.err_ue);
    f << buf;
    if (i > 0) {
      std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g,%.17g",
                    study.ratio_v_l2[i - 1], study.ratio_v_final[i - 1],
                    study.ratio_ui[i - 1], study.ratio_ue[i - 1]);
      f << buf;
    } else {
      f << ",,,,";
    }
    f << "\n";
  }
}

}  // namespace fasc
