#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace gpsysid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Lower-triangular factor L with L·Lᵀ = A + jitter_used·I.
class CholeskyFactor {
 public:
  CholeskyFactor(Matrix lower, double jitter_used)
      : lower_(std::move(lower)), jitter_used_(jitter_used) {}

  const Matrix& lower() const { return lower_; }
  double jitter_used() const { return jitter_used_; }
  Eigen::Index size() const { return lower_.rows(); }

  /// L·Lᵀ, i.e. the jittered matrix that was factored.
  Matrix reconstruct() const { return lower_ * lower_.transpose(); }

 private:
  Matrix lower_;
  double jitter_used_;
};

/// [0, 1e-10, 1e-8, 1e-6] scaled by tr(A)/n.
std::vector<double> default_jitter_schedule(const Matrix& a);

/// Factors a + jitter·I for the first schedule entry that succeeds.
/// Throws NotPositiveDefinite when every entry fails and DimensionMismatch
/// for non-square input.
CholeskyFactor cholesky(const Matrix& a, std::span<const double> jitter_schedule);
CholeskyFactor cholesky(const Matrix& a);

Matrix solve_spd(const CholeskyFactor& factor, const Matrix& b);
Vector solve_spd(const CholeskyFactor& factor, const Vector& b);

/// L⁻¹·b (forward substitution only).
Matrix solve_lower(const CholeskyFactor& factor, const Matrix& b);

double logdet(const CholeskyFactor& factor);

/// Matrix exponential by scaling and squaring around a diagonal Pade(6)
/// approximant.
Matrix expm(const Matrix& a);

/// Solves A·P + P·Aᵀ + Q = 0 for small dense A (Kronecker form).
Matrix solve_lyapunov(const Matrix& a, const Matrix& q);

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace gpsysid
