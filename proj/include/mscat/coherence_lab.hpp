#pragma once

// Normalized inner products between steering vectors for large spherical and planar arrays.
// Sensors are generated on the fly, so arrays with millions of elements are never stored.

#include "mscat/geometry.hpp"
#include "mscat/types.hpp"

#include <algorithm>
#include <cstdlib>
#include <ostream>
#include <thread>

namespace mscat {

/// Worker count for sweeps: MSCAT_THREADS if set, else the hardware concurrency.
inline unsigned sweep_threads() {
  if (const char* env = std::getenv("MSCAT_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n) over `threads` workers with a static interleaved split.
template <typename Body>
void parallel_for(Index n, unsigned threads, Body&& body) {
  threads = static_cast<unsigned>(std::min<Index>(std::max<Index>(n, 1), threads));
  if (threads <= 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (Index i = t; i < n; i += threads) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct InnerProduct {
  double normalized = 0.0;
  double norm_sq_a = 0.0;
  double norm_sq_b = 0.0;
};

/// |g0(a)* g0(b)| / (||g0(a)|| ||g0(b)||) over the sensors produced by `array.for_each`.
template <typename Array>
InnerProduct normalized_inner_product(const Array& array, const Point3& a, const Point3& b) {
  Complex ip = 0.0;
  double na = 0.0, nb = 0.0;
  array.for_each([&](const Point3& x) {
    const double ra = (x - a).norm(), rb = (x - b).norm();
    if (ra < kCoincidenceTolerance || rb < kCoincidenceTolerance) throw SingularKernelError();
    ip += std::polar(1.0 / (ra * rb), kWavenumber * (rb - ra));
    na += 1.0 / (ra * ra);
    nb += 1.0 / (rb * rb);
  });
  const double scale = 1.0 / (16.0 * kPi * kPi);
  InnerProduct out;
  out.norm_sq_a = scale * na;
  out.norm_sq_b = scale * nb;
  out.normalized = std::min(1.0, std::abs(ip) / std::sqrt(na * nb));
  return out;
}

enum class Orientation { Parallel, Perpendicular };

inline std::string to_string(Orientation o) { return o == Orientation::Parallel ? "parallel" : "perpendicular"; }

struct CoherenceCurve {
  std::vector<double> separations;
  std::vector<double> measured;
  std::vector<double> predicted;
  std::vector<double> lower_bound;
  std::vector<double> upper_bound;
  std::string geometry;
};

inline double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

inline void check_separations(const std::vector<double>& seps, double distance) {
  if (seps.empty()) throw Error("separation sweep is empty");
  for (std::size_t i = 0; i < seps.size(); ++i) {
    if (i > 0 && !(seps[i] > seps[i - 1])) throw Error("separations must be strictly increasing");
    if (seps[i] < 3.0 * kWavelength)
      throw Error("scale separation violated: separation " + std::to_string(seps[i]) + " is not >> wavelength (need >= 3)");
    if (seps[i] > distance / 5.0)
      throw Error("scale separation violated: separation " + std::to_string(seps[i]) +
                  " is not << array distance (need <= L/5 = " + std::to_string(distance / 5.0) + ")");
  }
}

/// Pairs symmetric about the centre of a sphere of radius L, on a common diameter.
inline CoherenceCurve spherical_coherence_curve(double radius, double spacing, const std::vector<double>& seps,
                                                unsigned threads = sweep_threads()) {
  check_separations(seps, radius);
  const FibonacciSphere sphere{radius, spacing};
  CoherenceCurve c;
  c.geometry = "spherical L=" + std::to_string(radius) + " h=" + std::to_string(spacing) + " N=" + std::to_string(sphere.count());
  c.separations = seps;
  const auto n = static_cast<Index>(seps.size());
  c.measured.resize(seps.size());
  c.predicted.resize(seps.size());
  parallel_for(n, threads, [&](Index i) {
    const double d = seps[static_cast<std::size_t>(i)];
    c.measured[static_cast<std::size_t>(i)] =
        normalized_inner_product(sphere, Point3(0, 0, -0.5 * d), Point3(0, 0, 0.5 * d)).normalized;
    c.predicted[static_cast<std::size_t>(i)] = std::abs(sinc(kWavenumber * d));
  });
  c.lower_bound.assign(seps.size(), std::numeric_limits<double>::quiet_NaN());
  c.upper_bound.assign(seps.size(), std::numeric_limits<double>::quiet_NaN());
  return c;
}

/// cos of the largest polar angle subtended by a disk of diameter a at distance L.
inline double planar_cos_phi0(double aperture, double distance) {
  return 2.0 * distance / std::sqrt(aperture * aperture + 4.0 * distance * distance);
}

/// Continuum value of ||g0(y)||^2 on the axis of a disk array of diameter a and pitch h.
inline double planar_norm_sq(double aperture, double distance, double pitch) {
  return std::log1p(aperture * aperture / (4.0 * distance * distance)) / (16.0 * kPi * pitch * pitch);
}

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  Index points = 0;
};

/// Least-squares line through (log x, log y) at the local maxima of y (the upper envelope).
inline LogLogFit envelope_fit(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < y.size(); ++i)
    if (y[i] >= y[i - 1] && y[i] >= y[i + 1] && y[i] > 0.0) peaks.push_back(i);
  if (peaks.size() < 2) throw Error("envelope fit needs at least two local maxima");
  Eigen::MatrixXd a(static_cast<Index>(peaks.size()), 2);
  RealVector rhs(static_cast<Index>(peaks.size()));
  for (std::size_t k = 0; k < peaks.size(); ++k) {
    a(static_cast<Index>(k), 0) = 1.0;
    a(static_cast<Index>(k), 1) = std::log(x[peaks[k]]);
    rhs(static_cast<Index>(k)) = std::log(y[peaks[k]]);
  }
  const Eigen::Vector2d coef = a.colPivHouseholderQr().solve(rhs);
  return {coef(1), coef(0), static_cast<Index>(peaks.size())};
}

/// Disk array of diameter a and pitch h in the z = 0 plane; pairs start on the axis at height L
/// and are offset along the axis (parallel) or across it (perpendicular).
inline CoherenceCurve planar_coherence_curve(double aperture, double distance, double pitch, const std::vector<double>& seps,
                                             Orientation orientation, unsigned threads = sweep_threads()) {
  check_separations(seps, distance);
  const double c0 = planar_cos_phi0(aperture, distance);
  if (!(c0 <= 0.5)) throw Error("scale separation violated: cos(phi0) = " + std::to_string(c0) + " is not << 1 (need <= 0.5)");
  if (!(1.0 / (kWavenumber * seps.front()) <= 0.5 * c0))
    throw Error("scale separation violated: 1/(k*sep) is not << cos(phi0) (need <= cos(phi0)/2)");
  const DiskLattice disk{aperture, pitch};
  CoherenceCurve c;
  c.geometry = "planar a=" + std::to_string(aperture) + " L=" + std::to_string(distance) + " h=" + std::to_string(pitch) + " " +
               to_string(orientation);
  c.separations = seps;
  const std::size_t n = seps.size();
  c.measured.resize(n);
  c.predicted.assign(n, std::numeric_limits<double>::quiet_NaN());
  c.lower_bound.assign(n, std::numeric_limits<double>::quiet_NaN());
  c.upper_bound.assign(n, std::numeric_limits<double>::quiet_NaN());
  const Point3 base(0.0, 0.0, distance);
  parallel_for(static_cast<Index>(n), threads, [&](Index i) {
    const double d = seps[static_cast<std::size_t>(i)];
    const Point3 other = orientation == Orientation::Parallel ? Point3(0.0, 0.0, distance + d) : Point3(d, 0.0, distance);
    c.measured[static_cast<std::size_t>(i)] = normalized_inner_product(disk, base, other).normalized;
  });

  const double log_sec = -std::log(c0);
  if (orientation == Orientation::Parallel) {
    for (std::size_t i = 0; i < n; ++i) {
      const double ke = kWavenumber * seps[i];
      c.predicted[i] = 1.0 / (ke * c0 * log_sec);
      c.lower_bound[i] = (2.0 / c0 - 2.0) / (ke * log_sec);
      c.upper_bound[i] = 2.0 / (ke * c0 * log_sec);
    }
  } else {
    // C / sqrt(k d) with C fitted to the envelope at the fixed slope -1/2.
    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < n; ++i)
      if (c.measured[i] >= c.measured[i - 1] && c.measured[i] >= c.measured[i + 1]) peaks.push_back(i);
    double log_c = 0.0;
    for (std::size_t p : peaks) log_c += std::log(c.measured[p] * std::sqrt(kWavenumber * seps[p]));
    const double cst = peaks.empty() ? std::numeric_limits<double>::quiet_NaN() : std::exp(log_c / static_cast<double>(peaks.size()));
    for (std::size_t i = 0; i < n; ++i) c.predicted[i] = cst / std::sqrt(kWavenumber * seps[i]);
  }
  return c;
}

/// Rows "sep,measured,predicted,lower_bound,upper_bound"; absent values are left empty.
inline void write_curve_csv(std::ostream& out, const CoherenceCurve& c) {
  out << "sep,measured,predicted,lower_bound,upper_bound\n";
  out.precision(17);
  auto cell = [&out](double v) {
    out << ',';
    if (std::isfinite(v)) out << v;
  };
  for (std::size_t i = 0; i < c.separations.size(); ++i) {
    out << c.separations[i];
    cell(c.measured[i]);
    cell(c.predicted[i]);
    cell(c.lower_bound[i]);
    cell(c.upper_bound[i]);
    out << '\n';
  }
}

/// Evenly spaced separations from `first` to `last` inclusive.
inline std::vector<double> separation_sweep(double first, double last, double step) {
  std::vector<double> out;
  const auto n = static_cast<Index>(std::floor((last - first) / step + 1e-9));
  for (Index i = 0; i <= n; ++i) out.push_back(first + static_cast<double>(i) * step);
  return out;
}

}  // namespace mscat
