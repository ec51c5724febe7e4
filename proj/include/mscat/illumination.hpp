#pragma once

// Illumination vectors and multi-shot data matrices.

#include "mscat/forward.hpp"
#include "mscat/types.hpp"

#include <numeric>
#include <random>

namespace mscat {

struct Illumination {
  ComplexVector f;
  std::string label;
};

/// Unit vector e_s (0-based s) labelled with the 1-based transducer number.
inline Illumination point_illumination(Index s, Index n) {
  if (s < 0 || s >= n) throw Error("transducer index " + std::to_string(s + 1) + " out of range 1.." + std::to_string(n));
  return {ComplexVector::Unit(n, s), "transducer:" + std::to_string(s + 1)};
}

/// `count` distinct transducers drawn uniformly without replacement.
inline std::vector<Illumination> random_illuminations(Index count, Index n, std::uint64_t seed) {
  if (count < 0 || count > n) throw Error("cannot draw " + std::to_string(count) + " distinct transducers out of " + std::to_string(n));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  // Partial Fisher-Yates with an explicit uniform draw so the result does not depend on the
  // standard library's shuffle implementation.
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<Illumination> out;
  for (Index i = 0; i < count; ++i) out.push_back(point_illumination(order[static_cast<std::size_t>(i)], n));
  return out;
}

/// Leading right singular vectors of P, by descending singular value.
inline std::vector<Illumination> optimal_illuminations(const ResponseMatrix& p, Index count) {
  if (count < 1 || count > p.size()) throw Error("number of optimal illuminations must be in 1..N");
  const auto& svd = p.svd();
  std::vector<Illumination> out;
  for (Index j = 0; j < count; ++j) out.push_back({svd.V.col(j), "singular:" + std::to_string(j + 1)});
  return out;
}

struct DataMatrix {
  ComplexMatrix B;
  std::vector<Illumination> illuminations;
  double noise_pct = 0.0;
  /// Frobenius norm of the injected noise; only known for synthetic data.
  double noise_energy = 0.0;

  Index shots() const { return B.cols(); }
};

/// Column j is synthesize_data(P, f_j) with its own noise stream.
inline DataMatrix build_data_matrix(const ResponseMatrix& p, std::vector<Illumination> illuminations, double noise_pct,
                                    std::uint64_t seed) {
  DataMatrix d;
  d.B.resize(p.size(), static_cast<Index>(illuminations.size()));
  double e2 = 0.0;
  for (std::size_t j = 0; j < illuminations.size(); ++j) {
    const ComplexVector& f = illuminations[j].f;
    d.B.col(static_cast<Index>(j)) = synthesize_data(p, f, noise_pct, derive_seed(seed, j));
    e2 += (d.B.col(static_cast<Index>(j)) - p.matrix() * f).squaredNorm();
  }
  d.illuminations = std::move(illuminations);
  d.noise_pct = noise_pct;
  d.noise_energy = std::sqrt(e2);
  return d;
}

/// Optimal-illumination data from a measured (noisy) response matrix: B = P_meas V_nu, i.e.
/// column j is sigma_j U_j of the measured matrix. `exact` supplies the noise-free P so the
/// noise energy ||(P_meas - P) V_nu||_F can be reported.
inline DataMatrix optimal_data_matrix(const ResponseMatrix& measured, const ResponseMatrix& exact, Index count) {
  DataMatrix d;
  d.illuminations = optimal_illuminations(measured, count);
  d.B.resize(measured.size(), count);
  double e2 = 0.0;
  for (Index j = 0; j < count; ++j) {
    const ComplexVector& f = d.illuminations[static_cast<std::size_t>(j)].f;
    d.B.col(j) = measured.matrix() * f;
    e2 += (d.B.col(j) - exact.matrix() * f).squaredNorm();
  }
  d.noise_pct = 100.0 * measured.noise_level();
  d.noise_energy = std::sqrt(e2);
  return d;
}

inline void write_illuminations_csv(std::ostream& out, const std::vector<Illumination>& illums) {
  out << "label";
  if (!illums.empty())
    for (Index i = 0; i < illums.front().f.size(); ++i) out << ",re" << (i + 1) << ",im" << (i + 1);
  out << '\n';
  out.precision(17);
  for (const auto& il : illums) {
    out << il.label;
    for (Index i = 0; i < il.f.size(); ++i) out << ',' << il.f(i).real() << ',' << il.f(i).imag();
    out << '\n';
  }
}

}  // namespace mscat
