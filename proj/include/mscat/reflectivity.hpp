#pragma once

// Step two: reflectivities from recovered effective sources, by direct evaluation of the
// exciting fields (no linear solves).

#include "mscat/geometry.hpp"
#include "mscat/illumination.hpp"
#include "mscat/sparse_recovery.hpp"

#include <algorithm>
#include <limits>

namespace mscat {

/// g_f(y_j) = g0(y_j)^T f + sum_{k != j} gamma_k G0(y_j, y_k) on the support.
inline ComplexVector exciting_fields_on_support(const SensingMatrix& s, const ImageWindow& iw, const IndexSet& support,
                                                const ComplexVector& gamma, const ComplexVector& f) {
  const auto m = static_cast<Index>(support.size());
  if (m == 0) throw Error("exciting fields need a nonempty support");
  if (gamma.size() != m) throw Error("effective sources must be given on the support");
  ComplexVector out(m);
  for (Index j = 0; j < m; ++j) {
    const Index nj = support[static_cast<std::size_t>(j)];
    Complex v = s.physical_column(nj).transpose() * f;
    const Point3 yj = iw.point(nj);
    for (Index k = 0; k < m; ++k)
      if (k != j) v += gamma(k) * green_function(yj, iw.point(support[static_cast<std::size_t>(k)]));
    out(j) = v;
  }
  return out;
}

struct ReflectivityEstimate {
  IndexSet support;
  ComplexVector rho;
  /// M' x nu per-shot estimates gamma / g_f.
  ComplexMatrix per_illumination;
  ComplexMatrix exciting_fields;
  /// Shots used in each mean; 0 means every shot was screened and rho is NaN.
  std::vector<Index> shots_used;

  bool screened(Index i) const { return shots_used[static_cast<std::size_t>(i)] == 0; }
};

// A shot is dropped for y_i when |g_f(y_i)| falls below this fraction of the shot's median
// |g_f| over the support.
inline constexpr double kScreenFraction = 1e-3;

inline ReflectivityEstimate recover_reflectivities(const EffectiveSourceSolution& sol, const SensingMatrix& s,
                                                   const ImageWindow& iw, const std::vector<Illumination>& illums) {
  if (static_cast<Index>(illums.size()) != sol.X.cols()) throw Error("one illumination per solution column is required");
  ReflectivityEstimate est;
  est.support = sol.support;
  const auto m = static_cast<Index>(est.support.size());
  const Index nu = sol.X.cols();
  est.rho = ComplexVector::Zero(m);
  est.per_illumination.resize(m, nu);
  est.exciting_fields.resize(m, nu);
  est.shots_used.assign(static_cast<std::size_t>(m), 0);
  if (m == 0) return est;

  ComplexMatrix gamma(m, nu);
  for (Index i = 0; i < m; ++i) gamma.row(i) = sol.X.row(est.support[static_cast<std::size_t>(i)]);
  for (Index j = 0; j < nu; ++j) {
    est.exciting_fields.col(j) =
        exciting_fields_on_support(s, iw, est.support, gamma.col(j), illums[static_cast<std::size_t>(j)].f);
    est.per_illumination.col(j) = gamma.col(j).cwiseQuotient(est.exciting_fields.col(j));
  }

  std::vector<double> screen_tol(static_cast<std::size_t>(nu));
  std::vector<double> mags(static_cast<std::size_t>(m));
  for (Index j = 0; j < nu; ++j) {
    for (Index i = 0; i < m; ++i) mags[static_cast<std::size_t>(i)] = std::abs(est.exciting_fields(i, j));
    std::sort(mags.begin(), mags.end());
    const std::size_t h = mags.size() / 2;
    const double median = mags.size() % 2 ? mags[h] : 0.5 * (mags[h - 1] + mags[h]);
    screen_tol[static_cast<std::size_t>(j)] = kScreenFraction * median;
  }

  for (Index i = 0; i < m; ++i) {
    Complex sum = 0.0;
    Index used = 0;
    for (Index j = 0; j < nu; ++j) {
      if (!(std::abs(est.exciting_fields(i, j)) > screen_tol[static_cast<std::size_t>(j)])) continue;
      sum += est.per_illumination(i, j);
      ++used;
    }
    est.shots_used[static_cast<std::size_t>(i)] = used;
    est.rho(i) = used ? sum / static_cast<double>(used) : Complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
  }
  return est;
}

/// Rows "grid_index,x,y,re,im,abs,screened" with 1-based grid indices and in-plane offsets.
inline void write_reflectivities_csv(std::ostream& out, const ReflectivityEstimate& est, const ImageWindow& iw) {
  out << "grid_index,x,y,re,im,abs,screened\n";
  out.precision(17);
  for (std::size_t i = 0; i < est.support.size(); ++i) {
    const Index k = est.support[i];
    const Complex r = est.rho(static_cast<Index>(i));
    out << (k + 1) << ',' << iw.offset_u(k) << ',' << iw.offset_v(k) << ',' << r.real() << ',' << r.imag() << ','
        << std::abs(r) << ',' << (est.screened(static_cast<Index>(i)) ? 1 : 0) << '\n';
  }
}

}  // namespace mscat
