#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fascicle/errors.hpp"

namespace fasc {

enum class Nullspace { None, Constants };

struct Triplet {
  int row;
  int col;
  double value;
};

/// Symmetric sparse operator in compressed-row form. Immutable after
/// construction; matrix-vector products are safe to call concurrently.
class SparseOperator {
 public:
  static SparseOperator from_triplets(int n, std::vector<Triplet> entries,
                                      Nullspace ns = Nullspace::None);

  int dim() const { return n_; }
  Nullspace nullspace() const { return nullspace_; }

  // y = A x; rows are independent, so chunked execution is deterministic
  // for any thread count.
  void apply(std::span<const double> x, std::span<double> y,
             int threads = 1) const;

  double diagonal(int row) const;

 private:
  int n_ = 0;
  std::vector<int> row_ptr_;
  std::vector<int> col_;
  std::vector<double> val_;
  Nullspace nullspace_ = Nullspace::None;
};

struct CgResult {
  std::vector<double> x;
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
};

struct CgOptions {
  double tol = 1e-8;
  int max_iter = 0;  // 0: pick 50 * n^(1/3), capped at 20000
  int threads = 1;
  bool diagonal_scaling = false;
  // Observer called with (iteration, current iterate); used by tests to
  // track the A-norm error against a known solution.
  std::function<void(int, std::span<const double>)> iterate_observer;
};

/// Conjugate gradients for SPD (or semidefinite with constants nullspace)
/// systems. With Nullspace::Constants the rhs and every iterate are
/// projected to zero mean. Throws NumericalError on detected
/// indefiniteness or non-convergence.
CgResult cg_solve(const SparseOperator& a, std::span<const double> rhs,
                  const CgOptions& opts = {});

/// Subtracts the mean; idempotent to rounding.
void project_zero_mean(std::span<double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

struct NewtonOptions {
  double tol = 1e-12;
  int max_iter = 100;
  bool has_bracket = false;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
};

/// Scalar Newton iteration with bisection fallback on a supplied bracket.
double newton_scalar(const std::function<double(double)>& f,
                     const std::function<double(double)>& df, double x0,
                     const NewtonOptions& opts = {});

}  // namespace fasc
