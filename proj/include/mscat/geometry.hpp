#pragma once

// Sensor arrays, image windows, steering vectors and the sensing matrix.

#include "mscat/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mscat {

enum class ArrayKind { Linear, Planar, Spherical };

inline std::string to_string(ArrayKind kind) {
  switch (kind) {
    case ArrayKind::Linear: return "linear";
    case ArrayKind::Planar: return "planar";
    case ArrayKind::Spherical: return "spherical";
  }
  return "unknown";
}

/// Free-space Green's function exp(i k |x - y|) / (4 pi |x - y|).
inline Complex green_function(const Point3& x, const Point3& y) {
  const double r = (x - y).norm();
  if (r < kCoincidenceTolerance) throw SingularKernelError();
  return std::polar(1.0 / (4.0 * kPi * r), kWavenumber * r);
}

// Sampling schemes that can enumerate sensor positions without storing them.
// The coherence sweeps use arrays with millions of elements.

/// Fibonacci-sphere placement with roughly `spacing` between neighbours.
struct FibonacciSphere {
  double radius;
  double spacing;
  Point3 center = Point3::Zero();

  Index count() const {
    const double n = std::round(4.0 * kPi * radius * radius / (spacing * spacing));
    return std::max<Index>(1, static_cast<Index>(n));
  }

  template <typename Visitor>
  void for_each(Visitor&& visit) const {
    const Index n = count();
    const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
    for (Index i = 0; i < n; ++i) {
      const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double theta = golden_angle * static_cast<double>(i);
      visit(Point3(center.x() + radius * rho * std::cos(theta), center.y() + radius * rho * std::sin(theta),
                   center.z() + radius * z));
    }
  }
};

/// Square lattice of pitch `pitch` clipped to a disk of diameter `aperture`, in the plane z = 0.
struct DiskLattice {
  double aperture;
  double pitch;

  template <typename Visitor>
  void for_each(Visitor&& visit) const {
    const double r = 0.5 * aperture;
    const auto half = static_cast<long>(std::floor(r / pitch));
    for (long i = -half; i <= half; ++i) {
      const double x = static_cast<double>(i) * pitch;
      for (long j = -half; j <= half; ++j) {
        const double y = static_cast<double>(j) * pitch;
        if (x * x + y * y <= r * r) visit(Point3(x, y, 0.0));
      }
    }
  }

  Index count() const {
    Index n = 0;
    for_each([&n](const Point3&) { ++n; });
    return n;
  }
};

/// Transducer positions of an active array. Immutable after construction.
class ArrayGeometry {
 public:
  ArrayGeometry(std::vector<Point3> sensors, ArrayKind kind, double radius = 0.0,
                Point3 center = Point3::Zero())
      : sensors_(std::move(sensors)), kind_(kind), radius_(radius), center_(std::move(center)) {
    validate();
  }

  /// `count` sensors spaced `pitch` apart along the x axis, centred at the origin.
  static ArrayGeometry linear(Index count, double pitch) {
    if (count < 1) throw Error("array needs at least one sensor");
    std::vector<Point3> sensors;
    sensors.reserve(static_cast<std::size_t>(count));
    const double offset = 0.5 * static_cast<double>(count - 1) * pitch;
    for (Index i = 0; i < count; ++i) sensors.emplace_back(static_cast<double>(i) * pitch - offset, 0.0, 0.0);
    return ArrayGeometry(std::move(sensors), ArrayKind::Linear);
  }

  /// Disk-shaped planar array in z = 0 (see DiskLattice).
  static ArrayGeometry planar(double aperture, double pitch) {
    std::vector<Point3> sensors;
    DiskLattice{aperture, pitch}.for_each([&](const Point3& p) { sensors.push_back(p); });
    return ArrayGeometry(std::move(sensors), ArrayKind::Planar);
  }

  static ArrayGeometry spherical(double radius, double spacing, Point3 center = Point3::Zero()) {
    std::vector<Point3> sensors;
    FibonacciSphere sphere{radius, spacing, center};
    sensors.reserve(static_cast<std::size_t>(sphere.count()));
    sphere.for_each([&](const Point3& p) { sensors.push_back(p); });
    return ArrayGeometry(std::move(sensors), ArrayKind::Spherical, radius, center);
  }

  Index size() const { return static_cast<Index>(sensors_.size()); }
  const Point3& sensor(Index i) const { return sensors_[static_cast<std::size_t>(i)]; }
  const std::vector<Point3>& sensors() const { return sensors_; }
  ArrayKind kind() const { return kind_; }
  double radius() const { return radius_; }
  const Point3& center() const { return center_; }
  double wavelength() const { return kWavelength; }
  double wavenumber() const { return kWavenumber; }

 private:
  void validate() const {
    if (sensors_.empty()) throw Error("array needs at least one sensor");
    for (const auto& s : sensors_)
      if (!s.allFinite()) throw Error("sensor position is not finite");

    if (kind_ == ArrayKind::Spherical) {
      if (!(radius_ > 0.0)) throw Error("spherical array needs a positive radius");
      for (const auto& s : sensors_)
        if (std::abs((s - center_).norm() - radius_) >= 1e-9 * radius_)
          throw Error("sensor does not lie on the sphere of radius " + std::to_string(radius_));
      return;
    }

    // Linear and planar arrays: all sensors on one plane (best-fit plane through the centroid).
    if (sensors_.size() < 4) return;
    Point3 centroid = Point3::Zero();
    for (const auto& s : sensors_) centroid += s;
    centroid /= static_cast<double>(sensors_.size());
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    double extent = 0.0;
    for (const auto& s : sensors_) {
      const Point3 d = s - centroid;
      scatter += d * d.transpose();
      extent = std::max(extent, d.norm());
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
    const Point3 normal = eig.eigenvectors().col(0);
    for (const auto& s : sensors_)
      if (std::abs(normal.dot(s - centroid)) > 1e-9 * std::max(1.0, extent))
        throw Error(to_string(kind_) + " array sensors are not coplanar");
  }

  std::vector<Point3> sensors_;
  ArrayKind kind_;
  double radius_;
  Point3 center_;
};

/// Uniform nx-by-ny grid spanned by two orthonormal in-plane axes. Grid points are row-major:
/// index k = row * nx + col, with `col` running along `axis_u` (cross-range) and `row` along
/// `axis_v` (range).
class ImageWindow {
 public:
  ImageWindow(Point3 center, Index nx, Index ny, double pitch, Point3 axis_u = Point3::UnitX(),
              Point3 axis_v = Point3::UnitY())
      : center_(std::move(center)), axis_u_(axis_u.normalized()), axis_v_(axis_v.normalized()),
        nx_(nx), ny_(ny), pitch_(pitch) {
    if (nx_ < 1 || ny_ < 1) throw Error("image window needs at least one grid point per direction");
    if (!(pitch_ > 0.0)) throw Error("image window pitch must be positive");
    if (!center_.allFinite()) throw Error("image window center is not finite");
    if (std::abs(axis_u_.dot(axis_v_)) > 1e-12) throw Error("image window axes must be orthogonal");
  }

  /// Grid whose extents (distance between the outermost points) are width x height.
  static ImageWindow from_extents(const Point3& center, double width, double height, double pitch,
                                  const Point3& axis_u = Point3::UnitX(),
                                  const Point3& axis_v = Point3::UnitY()) {
    auto count = [pitch](double extent, const char* name) {
      const double cells = extent / pitch;
      if (std::abs(cells - std::round(cells)) > 1e-9)
        throw Error(std::string("image window ") + name + " is not a multiple of the pitch");
      return static_cast<Index>(std::round(cells)) + 1;
    };
    return ImageWindow(center, count(width, "width"), count(height, "height"), pitch, axis_u, axis_v);
  }

  Index nx() const { return nx_; }
  Index ny() const { return ny_; }
  Index size() const { return nx_ * ny_; }
  double pitch() const { return pitch_; }
  double width() const { return static_cast<double>(nx_ - 1) * pitch_; }
  double height() const { return static_cast<double>(ny_ - 1) * pitch_; }
  const Point3& center() const { return center_; }
  const Point3& axis_u() const { return axis_u_; }
  const Point3& axis_v() const { return axis_v_; }

  Index col(Index k) const { return k % nx_; }
  Index row(Index k) const { return k / nx_; }
  Index index(Index row, Index col) const { return row * nx_ + col; }

  /// In-plane offsets of grid point k from the window center.
  double offset_u(Index k) const { return (static_cast<double>(col(k)) - 0.5 * static_cast<double>(nx_ - 1)) * pitch_; }
  double offset_v(Index k) const { return (static_cast<double>(row(k)) - 0.5 * static_cast<double>(ny_ - 1)) * pitch_; }

  Point3 point(Index k) const {
    if (k < 0 || k >= size()) throw Error("grid index out of range");
    return center_ + offset_u(k) * axis_u_ + offset_v(k) * axis_v_;
  }

 private:
  Point3 center_;
  Point3 axis_u_;
  Point3 axis_v_;
  Index nx_;
  Index ny_;
  double pitch_;
};

/// Steering vector: entry r is G0(x_r, y).
inline ComplexVector green_vector(const ArrayGeometry& geom, const Point3& y) {
  ComplexVector g(geom.size());
  for (Index r = 0; r < geom.size(); ++r) g(r) = green_function(geom.sensor(r), y);
  return g;
}

/// N x K matrix of steering vectors at the image-window grid points.
struct SensingMatrix {
  ComplexMatrix G;
  /// l2 norms of the physical (unnormalized) steering vectors.
  RealVector column_norms;
  bool normalized = false;

  Index rows() const { return G.rows(); }
  Index cols() const { return G.cols(); }

  /// Physical steering vector of column j regardless of normalization.
  ComplexVector physical_column(Index j) const {
    return normalized ? ComplexVector(G.col(j) * column_norms(j)) : ComplexVector(G.col(j));
  }

  SensingMatrix normalized_copy() const {
    if (normalized) return *this;
    SensingMatrix out{G, column_norms, true};
    for (Index j = 0; j < out.cols(); ++j) out.G.col(j) /= column_norms(j);
    return out;
  }
};

inline SensingMatrix build_sensing_matrix(const ArrayGeometry& geom, const ImageWindow& iw, bool normalize) {
  SensingMatrix s;
  s.G.resize(geom.size(), iw.size());
  s.column_norms.resize(iw.size());
  for (Index j = 0; j < iw.size(); ++j) {
    const Point3 y = iw.point(j);
    for (Index r = 0; r < geom.size(); ++r) s.G(r, j) = green_function(geom.sensor(r), y);
    s.column_norms(j) = s.G.col(j).norm();
    if (normalize) s.G.col(j) /= s.column_norms(j);
  }
  s.normalized = normalize;
  return s;
}

/// Largest normalized inner product between two distinct columns. Evaluated blockwise so the
/// K x K Gram matrix is never held at once.
inline double mutual_coherence(const SensingMatrix& s) {
  const Index k = s.cols();
  if (k < 2) throw Error("mutual coherence needs at least two columns");
  ComplexMatrix g = s.G;
  for (Index j = 0; j < k; ++j) {
    const double n = g.col(j).norm();
    if (n == 0.0) throw Error("mutual coherence is undefined for a zero column");
    g.col(j) /= n;
  }
  constexpr Index kBlock = 256;
  double mu = 0.0;
  for (Index start = 0; start < k; start += kBlock) {
    const Index width = std::min(kBlock, k - start);
    const ComplexMatrix gram = g.adjoint() * g.middleCols(start, width);
    for (Index c = 0; c < width; ++c)
      for (Index i = 0; i < k; ++i)
        if (i != start + c) mu = std::max(mu, std::abs(gram(i, c)));
  }
  return std::min(mu, 1.0);
}

/// 1 - max_{j not in support} || pinv(G_support) g_j ||_1, on a column-normalized matrix.
/// Least-squares solves via column-pivoted QR; the pseudoinverse is never formed.
inline double exact_recovery_coefficient(const SensingMatrix& s, const IndexSet& support) {
  if (!s.normalized) throw Error("exact recovery coefficient needs a column-normalized sensing matrix");
  if (support.empty()) throw Error("exact recovery coefficient needs a nonempty support");
  ComplexMatrix sub(s.rows(), static_cast<Index>(support.size()));
  std::vector<bool> in_support(static_cast<std::size_t>(s.cols()), false);
  for (std::size_t c = 0; c < support.size(); ++c) {
    if (support[c] < 0 || support[c] >= s.cols()) throw Error("support index out of range");
    sub.col(static_cast<Index>(c)) = s.G.col(support[c]);
    in_support[static_cast<std::size_t>(support[c])] = true;
  }
  Eigen::JacobiSVD<ComplexMatrix> svd(sub);
  const RealVector& sv = svd.singularValues();
  if (sub.cols() > sub.rows() || sv(sv.size() - 1) <= 1e-10 * sv(0)) throw Error("dependent support columns");

  Eigen::ColPivHouseholderQR<ComplexMatrix> qr(sub);
  double worst = 0.0;
  for (Index j = 0; j < s.cols(); ++j) {
    if (in_support[static_cast<std::size_t>(j)]) continue;
    const ComplexVector coeffs = qr.solve(s.G.col(j));
    worst = std::max(worst, coeffs.cwiseAbs().sum());
  }
  return 1.0 - worst;
}

}  // namespace mscat
