#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "gpsysid/kernels.hpp"
#include "gpsysid/numerics.hpp"

namespace gpsysid {

/// Training inputs (rows are points), outputs and observation noise variance.
struct Dataset {
  Matrix inputs;
  Vector outputs;
  double noise_variance = 0.0;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index input_dim() const { return inputs.cols(); }
  /// Throws on N < 1, row/length mismatch, negative noise or non-finite values.
  void validate() const;
};

struct MeanFunction {
  enum class Kind { Zero, Constant };
  Kind kind = Kind::Zero;
  double constant = 0.0;

  static MeanFunction zero() { return {}; }
  static MeanFunction constant_value(double c) { return {Kind::Constant, c}; }

  double operator()(const Eigen::Ref<const Vector>& /*z*/) const {
    return kind == Kind::Constant ? constant : 0.0;
  }
  Vector evaluate(const Matrix& z) const {
    return Vector::Constant(z.rows(), kind == Kind::Constant ? constant : 0.0);
  }
};

struct PredictOptions {
  bool full_covariance = false;
  /// Adds σ_n² to the returned variances (observation predictive).
  bool observation_noise = false;
};

/// Posterior over f(Z*). Exactly one of `covariance` (full mode) or
/// `variance` (diagonal mode) is populated; variance() works in both modes.
struct Posterior {
  Vector mean;
  Matrix covariance;
  Vector diagonal;
  bool full = false;

  Vector variance() const { return full ? Vector(covariance.diagonal()) : diagonal; }
};

class TrainedGP {
 public:
  /// Conditions the prior on the dataset; O(N³).
  static TrainedGP fit(const Dataset& dataset, const Kernel& kernel,
                       const MeanFunction& mean = MeanFunction::zero());

  Posterior predict(const Matrix& test_inputs, PredictOptions options = {}) const;
  /// Posterior mean only; O(MN) instead of O(MN²).
  Vector predict_mean(const Matrix& test_inputs) const;

  const Kernel& kernel() const { return kernel_; }
  const MeanFunction& mean_function() const { return mean_; }
  const Matrix& train_inputs() const { return train_inputs_; }
  const Vector& train_outputs() const { return train_outputs_; }
  const CholeskyFactor& chol() const { return chol_; }
  const Vector& alpha() const { return alpha_; }
  double noise_variance() const { return noise_variance_; }
  Eigen::Index input_dim() const { return train_inputs_.cols(); }

 private:
  TrainedGP(Kernel kernel, MeanFunction mean, Matrix inputs, Vector outputs, CholeskyFactor chol,
            Vector alpha, double noise_variance);
  void check_test_dim(const Matrix& test_inputs) const;

  Kernel kernel_;
  MeanFunction mean_;
  Matrix train_inputs_;
  Vector train_outputs_;
  CholeskyFactor chol_;
  Vector alpha_;
  double noise_variance_;
};

struct NllResult {
  double value = 0.0;
  /// ∂/∂(log s, log ℓ, log σ_n).
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
};

/// Negative log marginal likelihood of the outputs and its gradient with
/// respect to the log-hyperparameters.
NllResult nll(const Dataset& dataset, const Kernel& kernel,
              const MeanFunction& mean = MeanFunction::zero());

/// nll at a log-hyperparameter vector (noise taken from the vector, not the dataset).
NllResult nll(const Dataset& dataset, KernelFamily family, const HyperVector& hyper,
              const MeanFunction& mean = MeanFunction::zero());

struct OptimizerConfig {
  int max_iter = 200;
  double grad_tol = 1e-5;
  /// Total number of starts; start 0 is the given init, the rest are
  /// log-uniform ±1 perturbations of it.
  int restarts = 3;
  std::uint64_t seed = 0;
  double log_lower = -12.0;
  double log_upper = 12.0;
};

/// Why a start stopped: projected-gradient ∞-norm reached grad_tol,
/// max_iter ran out, or the objective stopped decreasing at working
/// precision (relative decrease below 1e-10 over 10 iterations, or no
/// Armijo step found).
enum class StopReason { GradientTolerance, MaxIterations, Stalled };

std::string_view to_string(StopReason reason);

struct StartOutcome {
  HyperVector init;
  HyperVector hyper;
  double init_nll = 0.0;
  double final_nll = 0.0;
  int iterations = 0;
  bool converged = false;
  StopReason stop_reason = StopReason::MaxIterations;
  bool failed = false;
};

struct OptimizeResult {
  Kernel kernel;
  double noise_variance = 0.0;
  HyperVector hyper;
  double final_nll = 0.0;
  double grad_inf_norm = 0.0;
  int iterations = 0;
  /// True when the projected-gradient ∞-norm reached grad_tol.
  bool converged = false;
  StopReason stop_reason = StopReason::MaxIterations;
  std::vector<StartOutcome> starts;
};

/// Maximum-likelihood hyperparameters: best local minimum over restarts.
/// Starts whose init is not factorizable are skipped; NotPositiveDefinite is
/// thrown only when every start fails.
OptimizeResult optimize_hyper(const Dataset& dataset, KernelFamily family, const HyperVector& init,
                              const OptimizerConfig& config = {},
                              const MeanFunction& mean = MeanFunction::zero());

/// Same, with an explicit list of starting points (config.restarts ignored).
OptimizeResult optimize_hyper(const Dataset& dataset, KernelFamily family,
                              const std::vector<HyperVector>& inits, const OptimizerConfig& config,
                              const MeanFunction& mean = MeanFunction::zero());

/// Data-driven starting point: s = std(y), ℓ = mean per-dimension input std,
/// σ_n = 0.1·std(y).
HyperVector default_init(const Dataset& dataset, const MeanFunction& mean = MeanFunction::zero());

}  // namespace gpsysid
