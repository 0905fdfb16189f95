#pragma once

#include <random>
#include <span>
#include <vector>

#include "gpsysid/kernels.hpp"
#include "gpsysid/numerics.hpp"

namespace gpsysid {

/// dx/dt = A·x + B·η(t), f(t) = C·x(t), η white noise with spectral density q.
struct LtiSde {
  Matrix drift;           // A
  Vector noise_input;     // B
  Eigen::RowVectorXd measurement;  // C
  double spectral_density = 0.0;   // q
  Matrix stationary_cov;  // P∞

  Eigen::Index state_dim() const { return drift.rows(); }
};

/// Companion-form state-space model whose stationary covariance function is
/// the given half-integer Matérn kernel. Throws UnsupportedKernel for SE.
LtiSde matern_to_ss(const Kernel& kernel);

/// Exact transition over a gap: F = expm(A·Δt), Q = P∞ − F·P∞·Fᵀ.
struct DiscreteStep {
  Matrix transition;  // F
  Matrix process_cov;  // Q
};

DiscreteStep discretize(const LtiSde& sde, double dt);

struct GaussState {
  Vector mean;
  Matrix cov;
};

/// Per-event record of a forward/backward pass over merged observation and
/// test times.
struct KalmanTrace {
  std::vector<double> times;
  /// Index into the observation vector, or -1 for a test (no-update) event.
  std::vector<long> observation;
  std::vector<GaussState> predicted;
  std::vector<GaussState> filtered;
  std::vector<GaussState> smoothed;
  double nll = 0.0;
};

struct TemporalPosterior {
  Vector mean;
  Vector variance;
  /// Prediction-error-decomposition negative log marginal likelihood.
  double nll = 0.0;
};

/// Full pass. `times` must be strictly increasing (DuplicateTimes on ties);
/// `test_times` may be in any order.
KalmanTrace kalman_smooth(const Kernel& kernel, std::span<const double> times,
                          std::span<const double> outputs, double noise_variance,
                          std::span<const double> test_times);

/// GP posterior of f at `test_times` (returned in caller order) computed by
/// Kalman filtering and RTS smoothing in O((N + M)·d³).
TemporalPosterior kalman_regress(const Kernel& kernel, std::span<const double> times,
                                 std::span<const double> outputs, double noise_variance,
                                 std::span<const double> test_times);

/// Exact draw of f at sorted `times` from the zero-mean GP prior.
Vector sample_matern_path(const Kernel& kernel, std::span<const double> times,
                          std::mt19937_64& rng);

}  // namespace gpsysid
