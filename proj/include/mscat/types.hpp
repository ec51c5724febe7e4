#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mscat {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Point3 = Eigen::Vector3d;
using Index = Eigen::Index;

/// Sorted, duplicate-free list of 0-based column (grid) indices.
using IndexSet = std::vector<Index>;

inline constexpr double kPi = std::numbers::pi;

// All lengths are measured in wavelengths.
inline constexpr double kWavelength = 1.0;
inline constexpr double kWavenumber = 2.0 * kPi / kWavelength;

// Points closer than this are treated as coincident.
inline constexpr double kCoincidenceTolerance = 1e-9;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularKernelError : public Error {
 public:
  SingularKernelError() : Error("singular kernel: evaluation point coincides with a source point") {}
};

/// Raised when a dense system is too ill-conditioned to be solved reliably.
class SingularSystemError : public Error {
 public:
  SingularSystemError(const std::string& what, double condition_number)
      : Error(what + " (condition number estimate " + std::to_string(condition_number) + ")"),
        condition_number_(condition_number) {}

  double condition_number() const noexcept { return condition_number_; }

 private:
  double condition_number_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// splitmix64 finaliser; used to derive independent RNG streams from one master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace mscat
