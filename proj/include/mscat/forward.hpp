#pragma once

// Foldy-Lax multiple scattering: exciting fields, response matrix, synthetic array data.

#include "mscat/geometry.hpp"
#include "mscat/types.hpp"

#include <algorithm>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

namespace mscat {

/// True reflectivity vector on the image-window grid.
class ScattererScene {
 public:
  explicit ScattererScene(ComplexVector rho0) : rho0_(std::move(rho0)) {
    for (Index k = 0; k < rho0_.size(); ++k) {
      if (!std::isfinite(rho0_(k).real()) || !std::isfinite(rho0_(k).imag()))
        throw Error("reflectivity is not finite");
      if (rho0_(k) != Complex(0.0)) support_.push_back(k);
    }
  }

  /// Scatterers with reflectivities `alpha` at grid indices `indices` (0-based) of a K-point grid.
  static ScattererScene from_support(Index grid_size, const IndexSet& indices, const ComplexVector& alpha) {
    if (static_cast<Index>(indices.size()) != alpha.size())
      throw Error("scene needs one reflectivity per scatterer index");
    ComplexVector rho = ComplexVector::Zero(grid_size);
    for (std::size_t j = 0; j < indices.size(); ++j) {
      const Index k = indices[j];
      if (k < 0 || k >= grid_size) throw Error("scatterer index out of range");
      if (rho(k) != Complex(0.0)) throw Error("duplicate scatterer index");
      rho(k) = alpha(static_cast<Index>(j));
    }
    return ScattererScene(std::move(rho));
  }

  /// Amplitudes |alpha_j| with phases uniform on [0, 2 pi) drawn from `phase_seed`.
  static ScattererScene with_random_phases(Index grid_size, const IndexSet& indices,
                                           const std::vector<double>& amplitudes, std::uint64_t phase_seed) {
    if (indices.size() != amplitudes.size()) throw Error("scene needs one amplitude per scatterer index");
    std::mt19937_64 rng(phase_seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    ComplexVector alpha(static_cast<Index>(amplitudes.size()));
    for (std::size_t j = 0; j < amplitudes.size(); ++j) alpha(static_cast<Index>(j)) = std::polar(amplitudes[j], phase(rng));
    return from_support(grid_size, indices, alpha);
  }

  const ComplexVector& rho0() const { return rho0_; }
  const IndexSet& support() const { return support_; }
  Index count() const { return static_cast<Index>(support_.size()); }
  Index grid_size() const { return rho0_.size(); }

  /// Reflectivities on the support, in support order.
  ComplexVector alpha() const {
    ComplexVector a(count());
    for (Index j = 0; j < count(); ++j) a(j) = rho0_(support_[static_cast<std::size_t>(j)]);
    return a;
  }

 private:
  ComplexVector rho0_;
  IndexSet support_;
};

/// Scene as CSV rows "grid_index,re,im" with 1-based grid indices (nonzero entries only).
inline void write_scene_csv(std::ostream& out, const ScattererScene& scene) {
  out << "grid_index,re,im\n";
  out.precision(17);
  for (Index k : scene.support()) out << (k + 1) << ',' << scene.rho0()(k).real() << ',' << scene.rho0()(k).imag() << '\n';
}

inline ScattererScene read_scene_csv(std::istream& in, Index grid_size) {
  std::string line;
  IndexSet indices;
  std::vector<Complex> values;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("grid_index", 0) == 0) continue;
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c, ','))
      throw Error("malformed scene row: " + line);
    indices.push_back(std::stol(a) - 1);
    values.emplace_back(std::stod(b), std::stod(c));
  }
  return ScattererScene::from_support(grid_size, indices,
                                      Eigen::Map<const ComplexVector>(values.data(), static_cast<Index>(values.size())));
}

enum class FoldyLaxForm { Support, Extended };

/// Z with unit diagonal and off-diagonal -rho_j G0(y_i, y_j).
struct FoldyLaxMatrix {
  ComplexMatrix Z;
  FoldyLaxForm form;
};

/// M x M Foldy-Lax matrix on the scene support.
inline FoldyLaxMatrix foldy_lax_matrix(const ScattererScene& scene, const ImageWindow& iw) {
  const Index m = scene.count();
  const ComplexVector alpha = scene.alpha();
  ComplexMatrix z = ComplexMatrix::Identity(m, m);
  for (Index i = 0; i < m; ++i) {
    const Point3 yi = iw.point(scene.support()[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < m; ++j)
      if (i != j) z(i, j) = -alpha(j) * green_function(yi, iw.point(scene.support()[static_cast<std::size_t>(j)]));
  }
  return {std::move(z), FoldyLaxForm::Support};
}

/// K x K extension over every pair of grid points. Dense in K; only for cross-checks.
inline FoldyLaxMatrix extended_foldy_lax_matrix(const ScattererScene& scene, const ImageWindow& iw) {
  const Index k = iw.size();
  if (scene.grid_size() != k) throw Error("scene and image window sizes differ");
  ComplexMatrix z = ComplexMatrix::Identity(k, k);
  for (Index j : scene.support()) {
    const Point3 yj = iw.point(j);
    for (Index i = 0; i < k; ++i)
      if (i != j) z(i, j) = -scene.rho0()(j) * green_function(iw.point(i), yj);
  }
  return {std::move(z), FoldyLaxForm::Extended};
}

// Beyond this condition number the Foldy-Lax solve is refused.
inline constexpr double kMaxFoldyLaxCondition = 1e12;

inline Eigen::PartialPivLU<ComplexMatrix> factor_foldy_lax(const ComplexMatrix& z) {
  Eigen::PartialPivLU<ComplexMatrix> lu(z);
  const double rcond = lu.rcond();
  const double cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxFoldyLaxCondition)) throw SingularSystemError("Foldy-Lax matrix is singular (resonant configuration)", cond);
  return lu;
}

/// N x M matrix of steering vectors at the scatterer positions.
inline ComplexMatrix support_steering(const ScattererScene& scene, const ArrayGeometry& geom, const ImageWindow& iw) {
  ComplexMatrix gm(geom.size(), scene.count());
  for (Index j = 0; j < scene.count(); ++j) gm.col(j) = green_vector(geom, iw.point(scene.support()[static_cast<std::size_t>(j)]));
  return gm;
}

/// Exciting fields at the scatterers: solves Z_M phi_e = phi_inc with phi_inc_j = g0(y_j)^T f.
inline ComplexVector solve_exciting_fields(const ScattererScene& scene, const ArrayGeometry& geom,
                                           const ImageWindow& iw, const ComplexVector& f) {
  if (f.size() != geom.size()) throw Error("illumination length differs from the sensor count");
  const ComplexVector incident = support_steering(scene, geom, iw).transpose() * f;
  if (scene.count() == 0) return incident;
  return factor_foldy_lax(foldy_lax_matrix(scene, iw).Z).solve(incident);
}

struct SingularValueDecomposition {
  ComplexMatrix U;
  RealVector sigma;
  ComplexMatrix V;
};

/// Thin SVD with descending singular values; each right singular vector is rotated so its
/// largest-magnitude entry (lowest index on ties) is real and positive, and U follows.
inline SingularValueDecomposition canonical_svd(const ComplexMatrix& a) {
  Eigen::JacobiSVD<ComplexMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SingularValueDecomposition out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  for (Index j = 0; j < out.V.cols(); ++j) {
    Index best = 0;
    for (Index i = 1; i < out.V.rows(); ++i)
      if (std::abs(out.V(i, j)) > std::abs(out.V(best, j))) best = i;
    if (std::abs(out.V(best, j)) == 0.0) continue;
    const Complex phase = std::conj(out.V(best, j)) / std::abs(out.V(best, j));
    out.V.col(j) *= phase;
    out.U.col(j) *= phase;
    out.V(best, j) = std::abs(out.V(best, j));
  }
  return out;
}

/// N x N array response matrix. The SVD is computed on first use and shared between copies.
class ResponseMatrix {
 public:
  explicit ResponseMatrix(ComplexMatrix p, double noise_level = 0.0)
      : p_(std::move(p)), noise_level_(noise_level), cache_(std::make_shared<SvdCache>()) {}

  const ComplexMatrix& matrix() const { return p_; }
  Index size() const { return p_.rows(); }
  /// Fraction (not percent) of additive noise per measured column; 0 for exact data.
  double noise_level() const { return noise_level_; }

  const SingularValueDecomposition& svd() const {
    std::call_once(cache_->once, [this] { cache_->value = canonical_svd(p_); });
    return *cache_->value;
  }

  double symmetry_defect() const {
    const double n = p_.norm();
    return n == 0.0 ? 0.0 : (p_ - p_.transpose()).norm() / n;
  }

 private:
  struct SvdCache {
    std::once_flag once;
    std::optional<SingularValueDecomposition> value;
  };

  ComplexMatrix p_;
  double noise_level_;
  std::shared_ptr<SvdCache> cache_;
};

/// P = G_M diag(alpha) Z_M^{-1} G_M^T.
inline ResponseMatrix response_matrix(const ScattererScene& scene, const ArrayGeometry& geom, const ImageWindow& iw) {
  if (scene.count() == 0) return ResponseMatrix(ComplexMatrix::Zero(geom.size(), geom.size()));
  const ComplexMatrix gm = support_steering(scene, geom, iw);
  const auto lu = factor_foldy_lax(foldy_lax_matrix(scene, iw).Z);
  const ComplexMatrix zinv_gt = lu.solve(ComplexMatrix(gm.transpose()));
  return ResponseMatrix(gm * scene.alpha().asDiagonal() * zinv_gt);
}

/// Columns of G Z^{-T}(rho) over the whole grid.
inline ComplexMatrix foldy_lax_green_vectors(const ScattererScene& scene, const SensingMatrix& s, const ImageWindow& iw) {
  if (s.normalized) throw Error("Foldy-Lax Green vectors need the physical (unnormalized) sensing matrix");
  const auto lu = factor_foldy_lax(extended_foldy_lax_matrix(scene, iw).Z);
  // G Z^{-T} = (Z^{-1} G^T)^T.
  return lu.solve(ComplexMatrix(s.G.transpose())).transpose();
}

/// P = G diag(rho) G_FL^T through the extended K x K system.
inline ResponseMatrix response_matrix_extended(const ScattererScene& scene, const ArrayGeometry& geom,
                                               const ImageWindow& iw) {
  const SensingMatrix s = build_sensing_matrix(geom, iw, false);
  const ComplexMatrix g_fl = foldy_lax_green_vectors(scene, s, iw);
  return ResponseMatrix(s.G * scene.rho0().asDiagonal() * g_fl.transpose());
}

/// Born (single-scattering) response G diag(rho) G^T.
inline ResponseMatrix single_scattering_response(const ScattererScene& scene, const ArrayGeometry& geom,
                                                 const ImageWindow& iw) {
  const ComplexMatrix gm = support_steering(scene, geom, iw);
  return ResponseMatrix(gm * scene.alpha().asDiagonal() * gm.transpose());
}

/// Effective source vector gamma_f = diag(rho) Z^{-1} G^T f on the whole grid.
inline ComplexVector effective_sources(const ScattererScene& scene, const ArrayGeometry& geom, const ImageWindow& iw,
                                       const ComplexVector& f) {
  ComplexVector gamma = ComplexVector::Zero(scene.grid_size());
  const ComplexVector exciting = solve_exciting_fields(scene, geom, iw, f);
  for (Index j = 0; j < scene.count(); ++j) {
    const Index k = scene.support()[static_cast<std::size_t>(j)];
    gamma(k) = scene.rho0()(k) * exciting(j);
  }
  return gamma;
}

/// Percentage 100 ||P - P_ss||_F / ||P_ss||_F.
inline double multiple_scattering_amount(const ScattererScene& scene, const ArrayGeometry& geom, const ImageWindow& iw) {
  if (scene.count() == 0) throw Error("multiple scattering amount is undefined for an empty scene");
  const ComplexMatrix p = response_matrix(scene, geom, iw).matrix();
  const ComplexMatrix pss = single_scattering_response(scene, geom, iw).matrix();
  return 100.0 * (p - pss).norm() / pss.norm();
}

/// Circularly-symmetric complex Gaussian vector rescaled to norm `target`.
inline ComplexVector scaled_gaussian_noise(Index n, double target, std::uint64_t seed) {
  ComplexVector e(n);
  if (target == 0.0) return ComplexVector::Zero(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (Index i = 0; i < n; ++i) {
    const double re = normal(rng);
    e(i) = Complex(re, normal(rng));
  }
  return e * (target / e.norm());
}

/// b = P f + e with ||e|| = (noise_pct / 100) ||P f||. `f` must have unit norm.
inline ComplexVector synthesize_data(const ResponseMatrix& p, const ComplexVector& f, double noise_pct, std::uint64_t seed) {
  if (f.size() != p.size()) throw Error("illumination length differs from the response matrix size");
  if (std::abs(f.norm() - 1.0) > 1e-12) throw Error("illumination vector must have unit norm");
  if (!(noise_pct >= 0.0)) throw Error("noise percentage must be nonnegative");
  const ComplexVector clean = p.matrix() * f;
  return clean + scaled_gaussian_noise(clean.size(), noise_pct / 100.0 * clean.norm(), seed);
}

/// Response matrix measured one transducer at a time: column s is the noisy data for the
/// point illumination e_s.
inline ResponseMatrix measure_response_matrix(const ResponseMatrix& p, double noise_pct, std::uint64_t seed) {
  const Index n = p.size();
  ComplexMatrix measured(n, n);
  for (Index s = 0; s < n; ++s) {
    const ComplexVector f = ComplexVector::Unit(n, s);
    measured.col(s) = synthesize_data(p, f, noise_pct, derive_seed(seed, static_cast<std::uint64_t>(s)));
  }
  return ResponseMatrix(std::move(measured), noise_pct / 100.0);
}

/// Writes a complex matrix as CSV: each row holds re,im pairs, one pair per column.
inline void write_complex_csv(std::ostream& out, const ComplexMatrix& m) {
  out.precision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j).real() << ',' << m(i, j).imag();
    }
    out << '\n';
  }
}

}  // namespace mscat
