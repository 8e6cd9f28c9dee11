#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fascicle/errors.hpp"

namespace fasc {

struct FhnParams {
  double theta = 0.5;
  double a = 0.05;
  double b = 0.8;
  double c_m = 1.0;
  double lambda = 0.0;

  void validate() const {
    if (!(theta > 0.0) || !(a > 0.0) || !(b > 0.0) || !(c_m > 0.0))
      throw ConfigError("fhn params: theta, a, b, c_m must be positive");
    if (lambda < 0.0) throw ConfigError("fhn params: lambda must be >= 0");
  }
};

/// I_ion(v, g) = v^3/3 - v - g
inline double ionic_current(double v, double g) { return v * v * v / 3.0 - v - g; }

/// d/dt g = theta*v + a - b*g
inline double gating_rhs(double v, double g, const FhnParams& p) {
  return p.theta * v + p.a - p.b * g;
}

/// Exact solution of the gating ODE with frozen v over a step dt.
double gating_exact_step(double v_frozen, double g0, double dt, const FhnParams& p);

/// Smallest shift making the linear membrane block coercive (Young split),
/// plus a 0.01 margin.
double lambda_min(const FhnParams& p);

/// Rest point of the pointwise FHN system: v^3/3 - v - g = 0 with
/// g = (theta*v + a)/b; picks the stable negative branch.
struct RestPoint {
  double v;
  double g;
};
RestPoint fhn_rest_point(const FhnParams& p);

enum class MonotoneOp { B1, B2, Full };

/// A state pair (w, h) on a discrete mesh.
struct FieldPair {
  std::vector<double> w;
  std::vector<double> h;
};

struct MonotoneReport {
  bool pass = true;
  double worst = 0.0;        // most negative scaled inner product seen
  int violations = 0;
};

using LinearOp =
    std::function<void(std::span<const double>, std::span<double>)>;

/// Checks <Op(W1)-Op(W2), W1-W2> >= -1e-10 * scale over sample pairs in the
/// weighted mesh inner product. apply_a is the discrete transmembrane
/// operator entering B1 (may be empty for the pure coupling block); t is the
/// time at which the e^{2*lambda*t} factor of B2 is evaluated.
MonotoneReport check_monotone(MonotoneOp op, double lambda, const FhnParams& p,
                              const std::vector<std::pair<FieldPair, FieldPair>>& pairs,
                              double mesh_weight, const LinearOp& apply_a = {},
                              double t = 0.0);

/// B1 and B2 actions as testable objects.
void apply_b1(double lambda, const FhnParams& p, const FieldPair& in, FieldPair& out,
              const LinearOp& apply_a);
void apply_b2(double lambda, const FhnParams& p, double t, const FieldPair& in,
              FieldPair& out);

}  // namespace fasc
