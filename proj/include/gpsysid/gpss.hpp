#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gpsysid/gp.hpp"
#include "gpsysid/kernels.hpp"
#include "gpsysid/numerics.hpp"

namespace gpsysid {

/// x_{0:N} as rows of `states`, optional u_{0:N-1} and y_{1:N}.
struct StateTrajectory {
  Matrix states;
  std::optional<Vector> inputs;
  std::optional<Vector> outputs;

  /// Number of transitions N.
  Eigen::Index steps() const { return states.rows() > 0 ? states.rows() - 1 : 0; }
  Eigen::Index state_dim() const { return states.cols(); }
  /// Throws DimensionMismatch / InvalidArgument on inconsistent lengths or non-finite values.
  void validate() const;
};

/// How y_k relates to x_k.
enum class MeasurementKind {
  None,        // no measurement channel
  FirstState,  // y_k = x_{k,1} + ε_k (known function)
  Learned,     // y_k = g(x_k) + ε_k with g a GP
};

/// Common view used by simulate and bootstrap_pf. Batched: rows of `states`
/// are independent points (particles).
class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  virtual Eigen::Index state_dim() const = 0;
  virtual bool uses_inputs() const = 0;
  /// Posterior mean of f(x, u) for every row x; u ignored when !uses_inputs().
  virtual Matrix transition_mean(const Matrix& states, double input) const = 0;
  /// Diagonal of the process-noise covariance.
  virtual Vector process_noise_var() const = 0;
  virtual bool has_measurement() const = 0;
  virtual Vector measurement_mean(const Matrix& states) const = 0;
  virtual double measurement_noise_var() const = 0;
};

class GpssModel final : public StateSpaceModel {
 public:
  /// Checks input dimensions of every GP against the state/input layout.
  GpssModel(std::vector<TrainedGP> f_gps, bool uses_inputs, MeasurementKind measurement,
            std::optional<TrainedGP> g_gp, double meas_noise_var);

  const std::vector<TrainedGP>& f_gps() const { return f_gps_; }
  const std::optional<TrainedGP>& g_gp() const { return g_gp_; }
  MeasurementKind measurement_kind() const { return measurement_; }

  Eigen::Index state_dim() const override { return static_cast<Eigen::Index>(f_gps_.size()); }
  bool uses_inputs() const override { return uses_inputs_; }
  Matrix transition_mean(const Matrix& states, double input) const override;
  Vector process_noise_var() const override;
  bool has_measurement() const override { return measurement_ != MeasurementKind::None; }
  Vector measurement_mean(const Matrix& states) const override;
  double measurement_noise_var() const override { return meas_noise_var_; }

 private:
  std::vector<TrainedGP> f_gps_;
  bool uses_inputs_;
  MeasurementKind measurement_;
  std::optional<TrainedGP> g_gp_;
  double meas_noise_var_;
};

struct GpssFitOptions {
  KernelFamily family = KernelFamily::SquaredExponential;
  OptimizerConfig optimizer{};
  MeanFunction mean{};
  /// When set, g is the known map y = x_1 with this noise variance and the
  /// trajectory outputs are not needed. Otherwise g is learned from the
  /// outputs if present.
  std::optional<double> known_measurement_noise;
};

/// Per-dimension GP regression of x_{k+1,j} on (x_k, u_k); σ_n² of each GP is
/// the process-noise variance of that dimension. Throws SequenceTooShort when
/// N < d_x + 2.
GpssModel fit_gpss_observed(const StateTrajectory& traj, const GpssFitOptions& options = {});

struct GpssFit {
  GpssModel model;
  std::vector<OptimizeResult> f_optimization;
  std::optional<OptimizeResult> g_optimization;
};

/// fit_gpss_observed plus the per-GP optimizer outcomes.
GpssFit fit_gpss_observed_report(const StateTrajectory& traj, const GpssFitOptions& options = {});

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

/// Tensor product of Dirichlet Laplacian eigenfunctions on a rectangle:
/// Π_d √(2/L_d)·sin(j_d·π·(z_d − a_d)/L_d), j_d = 1..S_d. Index order is
/// row-major (last dimension fastest).
class SineBasis {
 public:
  SineBasis(std::vector<Interval> domain, std::vector<int> counts);

  const std::vector<Interval>& domain() const { return domain_; }
  const std::vector<int>& counts() const { return counts_; }
  Eigen::Index dim() const { return static_cast<Eigen::Index>(domain_.size()); }
  Eigen::Index size() const { return size_; }

  bool contains(const Eigen::Ref<const Vector>& z) const;
  /// All basis functions at z (no domain check; zero on the boundary).
  Vector evaluate(const Eigen::Ref<const Vector>& z) const;
  /// Rows are points; result is points × size().
  Matrix design(const Matrix& z) const;
  std::vector<int> multi_index(Eigen::Index i) const;
  /// √ of the Laplacian eigenvalue: the basis function's angular frequency.
  double frequency(Eigen::Index i) const;

 private:
  std::vector<Interval> domain_;
  std::vector<int> counts_;
  Eigen::Index size_ = 0;
};

/// Throws InvalidDomain on non-finite or empty intervals, S < 1, or size mismatch.
SineBasis make_sine_basis(std::vector<Interval> domain, std::vector<int> counts);

/// Spectral density of a stationary kernel in `dim` dimensions at angular frequency ω.
double spectral_density(const Kernel& kernel, double omega, int dim);

/// Prior coefficient variances matched to the kernel: S(ω_i) per basis function.
Vector spectral_prior_variances(const SineBasis& basis, const Kernel& kernel);

struct BasisPrediction {
  Vector mean;
  Vector variance;
};

class BasisModel final : public StateSpaceModel {
 public:
  BasisModel(SineBasis basis, std::vector<Vector> coef_mean, std::vector<Matrix> coef_cov,
             double process_noise_var, bool uses_inputs, MeasurementKind measurement,
             double meas_noise_var);

  const SineBasis& basis() const { return basis_; }
  const std::vector<Vector>& coef_mean() const { return coef_mean_; }
  const std::vector<Matrix>& coef_cov() const { return coef_cov_; }
  MeasurementKind measurement_kind() const { return measurement_; }

  /// f at one regressor z = (x, u): mean Σ E[c_i]φ_i(z), variance φᵀΣφ per
  /// state dimension. Throws StateOutsideDomain.
  BasisPrediction predict(const Eigen::Ref<const Vector>& z) const;

  Eigen::Index state_dim() const override { return static_cast<Eigen::Index>(coef_mean_.size()); }
  bool uses_inputs() const override { return uses_inputs_; }
  Matrix transition_mean(const Matrix& states, double input) const override;
  Vector process_noise_var() const override {
    return Vector::Constant(state_dim(), process_noise_var_);
  }
  bool has_measurement() const override { return measurement_ != MeasurementKind::None; }
  Vector measurement_mean(const Matrix& states) const override { return states.col(0); }
  double measurement_noise_var() const override { return meas_noise_var_; }

 private:
  SineBasis basis_;
  std::vector<Vector> coef_mean_;
  std::vector<Matrix> coef_cov_;
  double process_noise_var_;
  bool uses_inputs_;
  MeasurementKind measurement_;
  double meas_noise_var_;
};

struct BasisFitOptions {
  /// Prior variance per coefficient (size S).
  Vector prior_var;
  /// Observation noise on x_{k+1}; also the model's process noise.
  double noise_var = 1e-2;
  /// When set, the model gets the known measurement y = x_1 + ε with this variance.
  std::optional<double> measurement_noise_var;
};

/// Conjugate Gaussian posterior of the coefficients for each state dimension.
/// Throws StateOutsideDomain when a regressor (x_k, u_k) leaves the basis
/// domain and SequenceTooShort when N < 1.
BasisModel fit_basis_gpss_observed(const StateTrajectory& traj, const SineBasis& basis,
                                   const BasisFitOptions& options);

enum class SimulateMode { Mean, Sample };

/// Rolls the model forward from x0 for `horizon` steps. `inputs` must hold
/// u_0..u_{horizon-1} when the model uses inputs. Outputs y_{1:H} are filled
/// when the model has a measurement channel. Sample mode adds process and
/// measurement noise from counter-based streams keyed by `seed`.
StateTrajectory simulate(const StateSpaceModel& model, const Vector& x0,
                         std::span<const double> inputs, int horizon,
                         SimulateMode mode = SimulateMode::Mean, std::uint64_t seed = 0);

struct ParticleSet {
  Matrix particles;  // P × d_x
  Vector weights;    // sums to 1
};

struct PfOptions {
  int particles = 1000;
  std::uint64_t seed = 0;
  /// Gaussian prior on x_0 (diagonal); zero variance pins every particle.
  Vector initial_mean;
  Vector initial_var;
};

struct PfResult {
  /// Filtered moments of x_k for k = 1..N (rows).
  Matrix means;
  Matrix variances;
  double log_likelihood = 0.0;
  /// Effective sample size after weighting, per step.
  std::vector<double> ess;
  int resamples = 0;
  ParticleSet final_particles;
};

/// Indices drawn by systematic resampling with offset u0 ∈ [0, 1).
std::vector<Eigen::Index> systematic_resample(const Vector& weights, double u0);

/// Bootstrap particle filter for y_{1:N} given u_{0:N-1}. Resamples
/// systematically when ESS < P/2. Throws DegenerateWeights if every weight
/// underflows and InvalidArgument for P < 2 or a model without measurement.
PfResult bootstrap_pf(const StateSpaceModel& model, std::span<const double> outputs,
                      std::span<const double> inputs, const PfOptions& options);

}  // namespace gpsysid
