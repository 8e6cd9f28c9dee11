#include "fascicle/membrane.hpp"

#include <algorithm>
#include <cmath>

#include "fascicle/numerics.hpp"

namespace fasc {

double gating_exact_step(double v_frozen, double g0, double dt, const FhnParams& p) {
  if (dt < 0.0) throw ConfigError("gating_exact_step: dt must be >= 0");
  double g_inf = (p.theta * v_frozen + p.a) / p.b;
  return g_inf + (g0 - g_inf) * std::exp(-p.b * dt);
}

double lambda_min(const FhnParams& p) {
  p.validate();
  double half_cross = 0.5 * (p.theta + 1.0 / p.c_m);
  return std::max(1.0 / p.c_m + half_cross, half_cross - p.b) + 0.01;
}

RestPoint fhn_rest_point(const FhnParams& p) {
  // v^3/3 - (1 + theta/b) v - a/b = 0; rest points with v^2 > 1 + theta/b
  // are the stable ones, and we take the negative branch when it exists.
  const double pc = 1.0 + p.theta / p.b;
  const double q = p.a / p.b;
  auto f = [&](double v) { return v * v * v / 3.0 - pc * v - q; };
  auto df = [&](double v) { return v * v - pc; };
  double sp = std::sqrt(pc);
  double far = 2.0 * sp + std::cbrt(3.0 * q) + 1.0;
  NewtonOptions opts;
  opts.tol = 1e-14;
  opts.has_bracket = true;
  if (f(-sp) > 0.0) {
    opts.bracket_lo = -far;
    opts.bracket_hi = -sp;
  } else {
    opts.bracket_lo = sp;
    opts.bracket_hi = far;
  }
  double v = newton_scalar(f, df, 0.5 * (opts.bracket_lo + opts.bracket_hi), opts);
  return {v, (p.theta * v + p.a) / p.b};
}

void apply_b1(double lambda, const FhnParams& p, const FieldPair& in, FieldPair& out,
              const LinearOp& apply_a) {
  std::size_t n = in.w.size();
  out.w.assign(n, 0.0);
  out.h.assign(n, 0.0);
  if (apply_a) {
    apply_a(in.w, out.w);
    for (double& x : out.w) x /= p.c_m;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.w[i] += (lambda - 1.0 / p.c_m) * in.w[i] - in.h[i] / p.c_m;
    out.h[i] = (p.b + lambda) * in.h[i] - p.theta * in.w[i];
  }
}

void apply_b2(double lambda, const FhnParams& p, double t, const FieldPair& in,
              FieldPair& out) {
  std::size_t n = in.w.size();
  out.w.resize(n);
  out.h.assign(n, 0.0);
  double factor = std::exp(2.0 * lambda * t) / (3.0 * p.c_m);
  for (std::size_t i = 0; i < n; ++i) out.w[i] = factor * in.w[i] * in.w[i] * in.w[i];
}

MonotoneReport check_monotone(MonotoneOp op, double lambda, const FhnParams& p,
                              const std::vector<std::pair<FieldPair, FieldPair>>& pairs,
                              double mesh_weight, const LinearOp& apply_a, double t) {
  if (lambda < 0.0) throw ConfigError("check_monotone: lambda must be >= 0");
  MonotoneReport rep;
  FieldPair o1, o2, tmp;
  for (const auto& [w1, w2] : pairs) {
    auto eval = [&](const FieldPair& in, FieldPair& out) {
      switch (op) {
        case MonotoneOp::B1:
          apply_b1(lambda, p, in, out, apply_a);
          break;
        case MonotoneOp::B2:
          apply_b2(lambda, p, t, in, out);
          break;
        case MonotoneOp::Full:
          apply_b1(lambda, p, in, out, apply_a);
          apply_b2(lambda, p, t, in, tmp);
          for (std::size_t i = 0; i < out.w.size(); ++i) out.w[i] += tmp.w[i];
          break;
      }
    };
    eval(w1, o1);
    eval(w2, o2);
    double ip = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < w1.w.size(); ++i) {
      double dw = w1.w[i] - w2.w[i];
      double dh = w1.h[i] - w2.h[i];
      ip += ((o1.w[i] - o2.w[i]) * dw + (o1.h[i] - o2.h[i]) * dh) * mesh_weight;
      scale += (w1.w[i] * w1.w[i] + w2.w[i] * w2.w[i] + w1.h[i] * w1.h[i] +
                w2.h[i] * w2.h[i]) *
               mesh_weight;
    }
    double scaled = ip / scale;
    rep.worst = std::min(rep.worst, scaled);
    if (scaled < -1e-10) {
      rep.pass = false;
      ++rep.violations;
    }
  }
  return rep;
}

}  // namespace fasc
