#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "gpsysid/numerics.hpp"

namespace gpsysid {

enum class KernelFamily { SquaredExponential, Matern12, Matern32, Matern52 };

std::string_view to_string(KernelFamily family);
/// Accepts "se", "matern12", "matern32", "matern52" (case-insensitive).
std::optional<KernelFamily> parse_kernel_family(std::string_view name);

bool is_matern(KernelFamily family);

/// Stationary isotropic covariance function k(z, z') with magnitude s and
/// lengthscale ℓ. k(z, z) = s² for every family.
struct Kernel {
  KernelFamily family = KernelFamily::SquaredExponential;
  double magnitude = 1.0;
  double lengthscale = 1.0;

  /// Throws InvalidArgument unless s > 0 and ℓ > 0 are finite.
  void validate() const;
  double variance() const { return magnitude * magnitude; }
};

/// Log-hyperparameters in fixed order (log s, log ℓ, log σ_n).
struct HyperVector {
  static constexpr int kSize = 3;
  std::array<double, kSize> values{0.0, 0.0, 0.0};

  double log_magnitude() const { return values[0]; }
  double log_lengthscale() const { return values[1]; }
  double log_noise_std() const { return values[2]; }

  static HyperVector from(const Kernel& kernel, double noise_variance);
  Kernel kernel(KernelFamily family) const;
  double noise_variance() const;
  Eigen::Vector3d as_vector() const { return {values[0], values[1], values[2]}; }
  static HyperVector from_vector(const Eigen::Vector3d& v) { return {{v[0], v[1], v[2]}}; }
};

/// Covariance as a function of distance r = ‖z − z'‖.
double eval_distance(const Kernel& kernel, double r);

double eval(const Kernel& kernel, const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& z_prime);

/// Rows of za and zb are input points.
Matrix gram(const Kernel& kernel, const Matrix& za, const Matrix& zb);
Matrix gram(const Kernel& kernel, const Matrix& z);

/// (∂K/∂log s, ∂K/∂log ℓ).
std::array<Matrix, 2> grad_log_hyper(const Kernel& kernel, const Matrix& za, const Matrix& zb);

}  // namespace gpsysid
