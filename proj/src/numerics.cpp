#include "fascicle/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace fasc {

SparseOperator SparseOperator::from_triplets(int n, std::vector<Triplet> entries,
                                             Nullspace ns) {
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseOperator op;
  op.n_ = n;
  op.nullspace_ = ns;
  op.row_ptr_.assign(n + 1, 0);
  op.col_.reserve(entries.size());
  op.val_.reserve(entries.size());
  std::size_t i = 0;
  for (int r = 0; r < n; ++r) {
    while (i < entries.size() && entries[i].row == r) {
      int c = entries[i].col;
      double v = 0.0;
      while (i < entries.size() && entries[i].row == r && entries[i].col == c) {
        v += entries[i].value;
        ++i;
      }
      if (v != 0.0) {
        if (!std::isfinite(v)) throw NumericalError("non-finite matrix entry");
        op.col_.push_back(c);
        op.val_.push_back(v);
      }
    }
    op.row_ptr_[r + 1] = static_cast<int>(op.col_.size());
  }
  return op;
}

void SparseOperator::apply(std::span<const double> x, std::span<double> y,
                           int threads) const {
  auto rows = [&](int r0, int r1) {
    for (int r = r0; r < r1; ++r) {
      double s = 0.0;
      for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += val_[k] * x[col_[k]];
      y[r] = s;
    }
  };
  if (threads <= 1 || n_ < 4096) {
    rows(0, n_);
    return;
  }
  std::vector<std::thread> pool;
  int chunk = (n_ + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int r0 = t * chunk;
    int r1 = std::min(n_, r0 + chunk);
    if (r0 < r1) pool.emplace_back(rows, r0, r1);
  }
  for (auto& th : pool) th.join();
}

double SparseOperator::diagonal(int row) const {
  for (int k = row_ptr_[row]; k < row_ptr_[row + 1]; ++k)
    if (col_[k] == row) return val_[k];
  return 0.0;
}

void project_zero_mean(std::span<double> v) {
  if (v.empty()) return;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double& x : v) x -= mean;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

CgResult cg_solve(const SparseOperator& a, std::span<const double> rhs,
                  const CgOptions& opts) {
  const int n = a.dim();
  const bool project = a.nullspace() == Nullspace::Constants;

  std::vector<double> b(rhs.begin(), rhs.end());
  if (project) project_zero_mean(b);

  std::vector<double> scale(n, 1.0);
  if (opts.diagonal_scaling) {
    for (int i = 0; i < n; ++i) {
      double d = a.diagonal(i);
      scale[i] = d > 0.0 ? 1.0 / d : 1.0;
    }
  }

  CgResult res;
  res.x.assign(n, 0.0);
  std::vector<double> r = b;
  std::vector<double> z(n), p(n), ap(n);

  auto precond = [&](const std::vector<double>& in, std::vector<double>& out) {
    for (int i = 0; i < n; ++i) out[i] = scale[i] * in[i];
    if (project) project_zero_mean(out);
  };

  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  int max_iter = opts.max_iter;
  if (max_iter <= 0)
    max_iter = std::min(20000, 50 * static_cast<int>(std::cbrt(double(n))) + 100);

  precond(r, z);
  p = z;
  double rz = dot(r, z);
  for (int it = 0; it < max_iter; ++it) {
    a.apply(p, ap, opts.threads);
    double pap = dot(p, ap);
    if (pap <= 0.0) {
      if (norm2(p) == 0.0) break;
      throw NumericalError("cg: negative curvature, operator not SPD", norm2(r) / bnorm);
    }
    double alpha = rz / pap;
    for (int i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    if (project) project_zero_mean(res.x);
    ++res.iterations;
    double rel = norm2(r) / bnorm;
    res.residual_history.push_back(rel);
    if (opts.iterate_observer) opts.iterate_observer(res.iterations, res.x);
    if (rel <= opts.tol) {
      res.converged = true;
      res.rel_residual = rel;
      return res;
    }
    precond(r, z);
    double rz_new = dot(r, z);
    double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  res.rel_residual = norm2(r) / bnorm;
  if (!res.converged)
    throw NumericalError("cg: no convergence after " + std::to_string(res.iterations) +
                             " iterations",
                         res.rel_residual);
  return res;
}

double newton_scalar(const std::function<double(double)>& f,
                     const std::function<double(double)>& df, double x0,
                     const NewtonOptions& opts) {
  double lo = opts.bracket_lo, hi = opts.bracket_hi;
  bool have_bracket = opts.has_bracket;
  if (have_bracket && lo > hi) std::swap(lo, hi);
  double flo = 0.0, fhi = 0.0;
  if (have_bracket) {
    flo = f(lo);
    fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (flo * fhi > 0.0) have_bracket = false;
  }

  double x = x0;
  for (int it = 0; it < opts.max_iter; ++it) {
    double fx = f(x);
    if (std::abs(fx) <= opts.tol) return x;
    if (have_bracket) {
      if (flo * fx < 0.0) {
        hi = x;
        fhi = fx;
      } else {
        lo = x;
        flo = fx;
      }
    }
    double d = df(x);
    double step = d != 0.0 ? fx / d : 0.0;
    double xn = x - step;
    bool bad = d == 0.0 || !std::isfinite(xn) ||
               (have_bracket && (xn <= lo || xn >= hi));
    if (bad) {
      if (!have_bracket)
        throw NumericalError("newton_scalar: divergence without bracket", std::abs(fx));
      xn = 0.5 * (lo + hi);
    }
    x = xn;
  }
  // Bisection tail: Newton stalled inside the bracket.
  if (have_bracket) {
    for (int it = 0; it < 200; ++it) {
      x = 0.5 * (lo + hi);
      double fx = f(x);
      if (std::abs(fx) <= opts.tol || hi - lo < 1e-16 * std::max(1.0, std::abs(x)))
        return x;
      if (flo * fx < 0.0) {
        hi = x;
        fhi = fx;
      } else {
        lo = x;
        flo = fx;
      }
    }
    return x;
  }
  throw NumericalError("newton_scalar: no convergence");
}

}  // namespace fasc
