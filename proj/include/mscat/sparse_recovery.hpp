#pragma once

// Joint-sparse recovery of effective sources: GeLMA for the l1 / J21 problems, support
// extraction and the coherence-based recovery bounds.

#include "mscat/geometry.hpp"
#include "mscat/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

namespace mscat {

/// ( sum_i ||X_i.||_p^q )^(1/q).
inline double jpq_norm(const ComplexMatrix& x, double p, double q) {
  if (!(p >= 1.0) || !(q >= 1.0)) throw Error("J_{p,q} norm needs p, q >= 1");
  double total = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    double row = 0.0;
    if (p == 2.0) {
      row = x.row(i).norm();
    } else {
      for (Index j = 0; j < x.cols(); ++j) row += std::pow(std::abs(x(i, j)), p);
      row = std::pow(row, 1.0 / p);
    }
    total += q == 1.0 ? row : std::pow(row, q);
  }
  return q == 1.0 ? total : std::pow(total, 1.0 / q);
}

/// Largest singular value of G by power iteration on G*G from a fixed start vector.
inline double spectral_norm_estimate(const ComplexMatrix& g, Index max_iters = 500, double tolerance = 1e-12) {
  if (g.size() == 0) return 0.0;
  ComplexVector v = ComplexVector::Ones(g.cols()) / std::sqrt(static_cast<double>(g.cols()));
  double lambda = 0.0;
  for (Index it = 0; it < max_iters; ++it) {
    ComplexVector w = g.adjoint() * (g * v);
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    v = w / next;
    const bool done = std::abs(next - lambda) <= tolerance * next;
    lambda = next;
    if (done) break;
  }
  return std::sqrt(lambda);
}

/// Row-wise shrinkage: rows with norm <= t vanish, the others shrink by t in norm.
inline void shrink_rows(ComplexMatrix& y, double t) {
  for (Index i = 0; i < y.rows(); ++i) {
    const double n = y.row(i).norm();
    if (n > t)
      y.row(i) *= (n - t) / n;
    else
      y.row(i).setZero();
  }
}

struct IterationRecord {
  Index iteration;
  double residual;
  double j21;
};

struct SolverSettings {
  /// Step size; defaults to 0.9 / ||G||^2 with the spectral norm from power iteration.
  std::optional<double> step;
  /// Regularization weight; defaults to tau_scale * ||G* B||_{2->inf}.
  std::optional<double> tau;
  double tau_scale = 0.3;
  Index max_iters = 50000;
  /// Stop once ||X_new - X_old||_F < tolerance ||X_new||_F.
  double tolerance = 1e-10;
  /// Noise budget; when positive the iteration also stops at the first ||G X - B||_F <= delta.
  double delta = 0.0;
  /// Relative row-norm cut used for the support when no theory threshold applies.
  double support_fraction = 0.1;
  std::function<void(const IterationRecord&)> on_iteration;
};

/// Raised when the residual runs away; carries the last iterate (normalized variables).
class DivergenceError : public Error {
 public:
  DivergenceError(ComplexMatrix iterate, Index iteration, double residual)
      : Error("GeLMA diverged at iteration " + std::to_string(iteration) + " (residual " + std::to_string(residual) + ")"),
        iterate_(std::move(iterate)),
        iteration_(iteration) {}

  const ComplexMatrix& iterate() const noexcept { return iterate_; }
  Index iteration() const noexcept { return iteration_; }

 private:
  ComplexMatrix iterate_;
  Index iteration_;
};

struct EffectiveSourceSolution {
  /// Effective sources in physical units, one column per illumination.
  ComplexMatrix X;
  /// Iterate for the column-normalized sensing matrix (X_normalized = diag(column_norms) X).
  ComplexMatrix X_normalized;
  /// Row norms of X_normalized; the support is read off these.
  RealVector row_norms;
  IndexSet support;
  double threshold = 0.0;
  /// ||G X - B||_F of the returned iterate.
  double residual = 0.0;
  Index iterations = 0;
  bool converged = false;
  double step = 0.0;
  double tau = 0.0;
  double spectral_norm = 0.0;
};

inline IndexSet rows_above(const RealVector& row_norms, double threshold) {
  IndexSet out;
  for (Index i = 0; i < row_norms.size(); ++i)
    if (row_norms(i) > threshold) out.push_back(i);
  return out;
}

inline double relative_threshold(const RealVector& row_norms, double fraction) {
  const double mx = row_norms.size() ? row_norms.maxCoeff() : 0.0;
  // Cut at fraction * max, inclusive of the cut itself; an all-zero iterate has no support.
  return mx > 0.0 ? std::nextafter(fraction * mx, 0.0) : 0.0;
}

/// Algorithm: R = B - G X; X <- shrink(X + beta G*(Z + R), beta tau); Z <- Z + beta R.
/// With one column of B this is the single-illumination l1 problem.
inline EffectiveSourceSolution gelma_solve(const SensingMatrix& s, const ComplexMatrix& b,
                                           const SolverSettings& settings = {}) {
  if (!s.normalized) throw Error("GeLMA needs a column-normalized sensing matrix");
  if (b.rows() != s.rows()) throw Error("data rows differ from the sensor count");
  const ComplexMatrix& g = s.G;

  EffectiveSourceSolution sol;
  sol.spectral_norm = spectral_norm_estimate(g);
  const double beta_max = 1.0 / (sol.spectral_norm * sol.spectral_norm);
  sol.step = settings.step.value_or(0.9 * beta_max);
  if (!(sol.step > 0.0) || sol.step > beta_max * (1.0 + 1e-9))
    throw Error("step size must lie in (0, 1/||G||^2]");
  sol.tau = settings.tau.value_or(settings.tau_scale * (g.adjoint() * b).rowwise().norm().maxCoeff());
  if (!(sol.tau >= 0.0)) throw Error("regularization parameter must be nonnegative");

  const double beta = sol.step;
  const double bnorm = b.norm();
  ComplexMatrix x = ComplexMatrix::Zero(g.cols(), b.cols());
  ComplexMatrix z = ComplexMatrix::Zero(b.rows(), b.cols());
  ComplexMatrix r(b.rows(), b.cols());
  ComplexMatrix x_old;
  double min_residual = std::numeric_limits<double>::infinity();

  Index it = 0;
  for (; it < settings.max_iters; ++it) {
    r.noalias() = b - g * x;
    const double res = r.norm();
    if (settings.on_iteration) settings.on_iteration({it, res, jpq_norm(x, 2.0, 1.0)});
    min_residual = std::min(min_residual, res);
    // The multiplier update makes the residual oscillate well above its running minimum on
    // convergent runs, so growth is only judged against the starting residual ||B||.
    if (!std::isfinite(res) || res > 10.0 * std::max(min_residual, bnorm)) throw DivergenceError(x, it, res);
    if (settings.delta > 0.0 && res <= settings.delta) {
      sol.converged = true;
      break;
    }
    x_old = x;
    x.noalias() += beta * (g.adjoint() * (z + r));
    shrink_rows(x, beta * sol.tau);
    z += beta * r;
    const double change = (x - x_old).norm();
    const double xn = x.norm();
    if ((change == 0.0 && res == 0.0) || (xn > 0.0 && change < settings.tolerance * xn)) {
      sol.converged = true;
      ++it;
      break;
    }
  }
  sol.iterations = it;
  sol.residual = (g * x - b).norm();
  sol.row_norms = x.rowwise().norm();
  sol.threshold = relative_threshold(sol.row_norms, settings.support_fraction);
  sol.support = rows_above(sol.row_norms, sol.threshold);
  sol.X = s.column_norms.cwiseInverse().asDiagonal() * x;
  sol.X_normalized = std::move(x);
  return sol;
}

/// Single-illumination problem: min ||x||_1 subject to G x = b.
inline EffectiveSourceSolution gelma_solve_smv(const SensingMatrix& s, const ComplexVector& b,
                                               const SolverSettings& settings = {}) {
  return gelma_solve(s, ComplexMatrix(b), settings);
}

struct TheoryBounds {
  double epsilon = 0.0;
  Index sparsity = 0;
  double noise_energy = 0.0;
  /// Smallest admissible constraint radius.
  double delta_min = 0.0;
  /// Constraint radius the bounds below refer to (>= delta_min).
  double delta = 0.0;
  /// Error bound delta / sqrt(1 - (M-1) eps); rows of X_0 above it are detected.
  double err_bound = 0.0;
  bool conditions_hold = false;

  std::string status() const { return conditions_hold ? "conditions hold" : "conditions violated"; }
};

/// Bounds for coherence eps, M scatterers and noise energy ||E||_F; delta defaults to delta_min.
inline TheoryBounds theory_bounds(double epsilon, Index m, double noise_energy, std::optional<double> delta = {}) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw Error("coherence must lie in [0, 1)");
  if (m < 1) throw Error("sparsity must be at least 1");
  TheoryBounds t;
  t.epsilon = epsilon;
  t.sparsity = m;
  t.noise_energy = noise_energy;
  const double md = static_cast<double>(m);
  t.conditions_hold = md * epsilon < 0.5;
  const double shrink = 1.0 - (md - 1.0) * epsilon;
  const double denom = 1.0 - 2.0 * md * epsilon + epsilon;
  t.delta_min = noise_energy * std::sqrt(1.0 + md * shrink / (denom * denom));
  t.delta = delta.value_or(t.delta_min);
  t.err_bound = shrink > 0.0 ? t.delta / std::sqrt(shrink) : std::numeric_limits<double>::infinity();
  return t;
}

inline IndexSet extract_support(const EffectiveSourceSolution& sol, double threshold) {
  return rows_above(sol.row_norms, threshold);
}

/// Theory threshold when its conditions hold, otherwise `fallback_fraction` of the largest row norm.
inline IndexSet extract_support(const EffectiveSourceSolution& sol, const TheoryBounds& bounds,
                                double fallback_fraction = 0.1) {
  const double t = bounds.conditions_hold ? bounds.err_bound : relative_threshold(sol.row_norms, fallback_fraction);
  return rows_above(sol.row_norms, t);
}

/// Minimiser of 0.5 ||G X - B||_F^2 + tau J21(X) by FISTA.
inline ComplexMatrix solve_penalized_j21(const ComplexMatrix& g, const ComplexMatrix& b, double tau, double lipschitz,
                                         Index max_iters = 100000, double tolerance = 1e-13) {
  const double step = 1.0 / lipschitz;
  ComplexMatrix x = ComplexMatrix::Zero(g.cols(), b.cols());
  ComplexMatrix y = x;
  ComplexMatrix x_old;
  double t = 1.0;
  for (Index it = 0; it < max_iters; ++it) {
    x_old = x;
    x = y - step * (g.adjoint() * (g * y - b));
    shrink_rows(x, step * tau);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x + ((t - 1.0) / t_next) * (x - x_old);
    t = t_next;
    const double change = (x - x_old).norm();
    if (change <= tolerance * std::max(x.norm(), 1e-300)) break;
  }
  return x;
}

/// Solution of min J21(X) s.t. ||G X - B||_F <= delta, through the penalized problem with
/// tau bisected (on a log scale) until the residual meets delta.
inline ComplexMatrix solve_noise_constrained(const SensingMatrix& s, const ComplexMatrix& b, double delta,
                                             Index bisection_steps = 60) {
  if (!s.normalized) throw Error("the constrained solver needs a column-normalized sensing matrix");
  if (b.norm() <= delta) return ComplexMatrix::Zero(s.cols(), b.cols());
  const double sigma = spectral_norm_estimate(s.G);
  const double lipschitz = 1.0001 * sigma * sigma;
  // Above tau_max the penalized minimiser is zero.
  const double tau_max = (s.G.adjoint() * b).rowwise().norm().maxCoeff();
  double lo = std::log(tau_max * 1e-12), hi = std::log(tau_max);
  ComplexMatrix best = ComplexMatrix::Zero(s.cols(), b.cols());
  bool have = false;
  for (Index k = 0; k < bisection_steps; ++k) {
    const double mid = 0.5 * (lo + hi);
    ComplexMatrix x = solve_penalized_j21(s.G, b, std::exp(mid), lipschitz);
    if ((s.G * x - b).norm() <= delta) {
      best = std::move(x);
      have = true;
      lo = mid;
    } else {
      hi = mid;
    }
  }
  if (!have) best = solve_penalized_j21(s.G, b, std::exp(lo), lipschitz);
  return best;
}

/// J11 minimisation as independent single-column solves; returns the union of their supports.
inline IndexSet decoupled_union_support(const SensingMatrix& s, const ComplexMatrix& b, const SolverSettings& settings = {}) {
  std::vector<bool> in(static_cast<std::size_t>(s.cols()), false);
  for (Index j = 0; j < b.cols(); ++j)
    for (Index i : gelma_solve_smv(s, b.col(j), settings).support) in[static_cast<std::size_t>(i)] = true;
  IndexSet out;
  for (Index i = 0; i < s.cols(); ++i)
    if (in[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

}  // namespace mscat
