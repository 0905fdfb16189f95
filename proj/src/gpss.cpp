#include "gpsysid/gpss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "gpsysid/error.hpp"
#include "gpsysid/rng.hpp"

namespace gpsysid {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

// Regressor rows (x_k, u_k) for k = 0..N-1.
Matrix transition_regressors(const StateTrajectory& traj) {
  const Eigen::Index n = traj.steps();
  const Eigen::Index dx = traj.state_dim();
  const bool with_u = traj.inputs.has_value();
  Matrix z(n, dx + (with_u ? 1 : 0));
  z.leftCols(dx) = traj.states.topRows(n);
  if (with_u) z.col(dx) = *traj.inputs;
  return z;
}

Matrix with_input(const Matrix& states, double input, bool uses_inputs) {
  if (!uses_inputs) return states;
  Matrix z(states.rows(), states.cols() + 1);
  z.leftCols(states.cols()) = states;
  z.col(states.cols()).setConstant(input);
  return z;
}

void check_state_cols(const Matrix& states, Eigen::Index dx) {
  if (states.cols() != dx) {
    throw Error(ErrorCode::DimensionMismatch, "states have " + std::to_string(states.cols()) +
                                                  " columns, model state dimension is " +
                                                  std::to_string(dx));
  }
}

}  // namespace

void StateTrajectory::validate() const {
  if (states.rows() < 1 || states.cols() < 1) {
    throw Error(ErrorCode::InvalidArgument, "trajectory needs at least x_0 and one state dimension");
  }
  if (!all_finite(states)) throw Error(ErrorCode::InvalidArgument, "non-finite state value");
  const Eigen::Index n = steps();
  if (inputs) {
    if (inputs->size() != n) {
      throw Error(ErrorCode::DimensionMismatch, "inputs length " + std::to_string(inputs->size()) +
                                                    " != number of transitions " +
                                                    std::to_string(n));
    }
    if (!inputs->allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite input value");
  }
  if (outputs) {
    if (outputs->size() != n) {
      throw Error(ErrorCode::DimensionMismatch, "outputs length " +
                                                    std::to_string(outputs->size()) +
                                                    " != number of transitions " +
                                                    std::to_string(n));
    }
    if (!outputs->allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite output value");
  }
}

// ---------------------------------------------------------------- GpssModel

GpssModel::GpssModel(std::vector<TrainedGP> f_gps, bool uses_inputs, MeasurementKind measurement,
                     std::optional<TrainedGP> g_gp, double meas_noise_var)
    : f_gps_(std::move(f_gps)),
      uses_inputs_(uses_inputs),
      measurement_(measurement),
      g_gp_(std::move(g_gp)),
      meas_noise_var_(meas_noise_var) {
  if (f_gps_.empty()) throw Error(ErrorCode::InvalidArgument, "GpssModel needs at least one f GP");
  const Eigen::Index dx = state_dim();
  const Eigen::Index expect = dx + (uses_inputs_ ? 1 : 0);
  for (const auto& gp : f_gps_) {
    if (gp.input_dim() != expect) {
      throw Error(ErrorCode::DimensionMismatch, "f GP input dimension " +
                                                    std::to_string(gp.input_dim()) +
                                                    ", expected " + std::to_string(expect));
    }
  }
  if (measurement_ == MeasurementKind::Learned) {
    if (!g_gp_) throw Error(ErrorCode::InvalidArgument, "learned measurement needs a g GP");
    if (g_gp_->input_dim() != dx) {
      throw Error(ErrorCode::DimensionMismatch, "g GP input dimension " +
                                                    std::to_string(g_gp_->input_dim()) +
                                                    ", expected " + std::to_string(dx));
    }
    meas_noise_var_ = g_gp_->noise_variance();
  }
  if (measurement_ != MeasurementKind::None &&
      !(std::isfinite(meas_noise_var_) && meas_noise_var_ > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "measurement noise variance must be positive");
  }
}

Matrix GpssModel::transition_mean(const Matrix& states, double input) const {
  check_state_cols(states, state_dim());
  const Matrix z = with_input(states, input, uses_inputs_);
  Matrix out(states.rows(), state_dim());
  for (Eigen::Index j = 0; j < state_dim(); ++j) {
    out.col(j) = f_gps_[static_cast<std::size_t>(j)].predict_mean(z);
  }
  return out;
}

Vector GpssModel::process_noise_var() const {
  Vector q(state_dim());
  for (Eigen::Index j = 0; j < state_dim(); ++j) {
    q(j) = f_gps_[static_cast<std::size_t>(j)].noise_variance();
  }
  return q;
}

Vector GpssModel::measurement_mean(const Matrix& states) const {
  check_state_cols(states, state_dim());
  switch (measurement_) {
    case MeasurementKind::FirstState:
      return states.col(0);
    case MeasurementKind::Learned:
      return g_gp_->predict_mean(states);
    case MeasurementKind::None:
      break;
  }
  throw Error(ErrorCode::InvalidArgument, "model has no measurement channel");
}

namespace {

TrainedGP fit_one(Dataset ds, const GpssFitOptions& options, std::vector<OptimizeResult>& log) {
  const HyperVector init = default_init(ds, options.mean);
  log.push_back(optimize_hyper(ds, options.family, init, options.optimizer, options.mean));
  const HyperVector hyper = log.back().hyper;
  ds.noise_variance = hyper.noise_variance();
  return TrainedGP::fit(ds, hyper.kernel(options.family), options.mean);
}

}  // namespace

GpssModel fit_gpss_observed(const StateTrajectory& traj, const GpssFitOptions& options) {
  return fit_gpss_observed_report(traj, options).model;
}

GpssFit fit_gpss_observed_report(const StateTrajectory& traj, const GpssFitOptions& options) {
  traj.validate();
  const Eigen::Index n = traj.steps();
  const Eigen::Index dx = traj.state_dim();
  if (n < dx + 2) {
    throw Error(ErrorCode::SequenceTooShort, "need at least " + std::to_string(dx + 2) +
                                                 " transitions, got " + std::to_string(n));
  }
  const Matrix z = transition_regressors(traj);
  std::vector<OptimizeResult> f_log;
  std::vector<TrainedGP> f;
  f.reserve(static_cast<std::size_t>(dx));
  for (Eigen::Index j = 0; j < dx; ++j) {
    f.push_back(fit_one(Dataset{z, traj.states.col(j).tail(n), 0.0}, options, f_log));
  }

  const bool with_u = traj.inputs.has_value();
  if (options.known_measurement_noise) {
    return GpssFit{GpssModel(std::move(f), with_u, MeasurementKind::FirstState, std::nullopt,
                             *options.known_measurement_noise),
                   std::move(f_log), std::nullopt};
  }
  if (traj.outputs) {
    std::vector<OptimizeResult> g_log;
    TrainedGP g = fit_one(Dataset{traj.states.bottomRows(n), *traj.outputs, 0.0}, options, g_log);
    return GpssFit{GpssModel(std::move(f), with_u, MeasurementKind::Learned, std::move(g), 0.0),
                   std::move(f_log), std::move(g_log.front())};
  }
  return GpssFit{GpssModel(std::move(f), with_u, MeasurementKind::None, std::nullopt, 0.0),
                 std::move(f_log), std::nullopt};
}

// ---------------------------------------------------------------- SineBasis

SineBasis::SineBasis(std::vector<Interval> domain, std::vector<int> counts)
    : domain_(std::move(domain)), counts_(std::move(counts)) {
  if (domain_.empty()) throw Error(ErrorCode::InvalidDomain, "basis domain has no dimensions");
  if (domain_.size() != counts_.size()) {
    throw Error(ErrorCode::InvalidDomain, "basis has " + std::to_string(domain_.size()) +
                                              " intervals but " + std::to_string(counts_.size()) +
                                              " counts");
  }
  size_ = 1;
  for (std::size_t d = 0; d < domain_.size(); ++d) {
    const auto& iv = domain_[d];
    if (!(std::isfinite(iv.lower) && std::isfinite(iv.upper) && iv.lower < iv.upper)) {
      throw Error(ErrorCode::InvalidDomain, "interval " + std::to_string(d) +
                                                " must be finite with lower < upper");
    }
    if (counts_[d] < 1) {
      throw Error(ErrorCode::InvalidDomain, "basis count per dimension must be >= 1");
    }
    size_ *= counts_[d];
  }
}

bool SineBasis::contains(const Eigen::Ref<const Vector>& z) const {
  if (z.size() != dim()) return false;
  for (Eigen::Index d = 0; d < dim(); ++d) {
    const auto& iv = domain_[static_cast<std::size_t>(d)];
    if (!(z(d) >= iv.lower && z(d) <= iv.upper)) return false;
  }
  return true;
}

std::vector<int> SineBasis::multi_index(Eigen::Index i) const {
  std::vector<int> idx(domain_.size());
  for (std::size_t d = domain_.size(); d-- > 0;) {
    idx[d] = static_cast<int>(i % counts_[d]) + 1;
    i /= counts_[d];
  }
  return idx;
}

double SineBasis::frequency(Eigen::Index i) const {
  const auto idx = multi_index(i);
  double lambda = 0.0;
  for (std::size_t d = 0; d < domain_.size(); ++d) {
    const double w = idx[d] * std::numbers::pi / (domain_[d].upper - domain_[d].lower);
    lambda += w * w;
  }
  return std::sqrt(lambda);
}

Vector SineBasis::evaluate(const Eigen::Ref<const Vector>& z) const {
  if (z.size() != dim()) {
    throw Error(ErrorCode::DimensionMismatch, "basis point has dimension " +
                                                  std::to_string(z.size()) + ", expected " +
                                                  std::to_string(dim()));
  }
  // Per-dimension factors, then the row-major tensor product.
  Vector out = Vector::Ones(1);
  for (std::size_t d = 0; d < domain_.size(); ++d) {
    const double a = domain_[d].lower;
    const double len = domain_[d].upper - domain_[d].lower;
    const double scale = std::sqrt(2.0 / len);
    Vector f(counts_[d]);
    for (int j = 0; j < counts_[d]; ++j) {
      f(j) = scale * std::sin((j + 1) * std::numbers::pi * (z(static_cast<Eigen::Index>(d)) - a) / len);
    }
    Vector next(out.size() * f.size());
    for (Eigen::Index p = 0; p < out.size(); ++p) next.segment(p * f.size(), f.size()) = out(p) * f;
    out = std::move(next);
  }
  return out;
}

Matrix SineBasis::design(const Matrix& z) const {
  Matrix phi(z.rows(), size_);
  for (Eigen::Index r = 0; r < z.rows(); ++r) phi.row(r) = evaluate(z.row(r).transpose()).transpose();
  return phi;
}

SineBasis make_sine_basis(std::vector<Interval> domain, std::vector<int> counts) {
  return SineBasis(std::move(domain), std::move(counts));
}

double spectral_density(const Kernel& kernel, double omega, int dim) {
  kernel.validate();
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "spectral density needs dim >= 1");
  const double s2 = kernel.variance();
  const double ell = kernel.lengthscale;
  const double d = dim;
  const double pi = std::numbers::pi;
  if (kernel.family == KernelFamily::SquaredExponential) {
    return s2 * std::pow(2.0 * pi * ell * ell, 0.5 * d) * std::exp(-0.5 * omega * omega * ell * ell);
  }
  double nu = 0.5;
  if (kernel.family == KernelFamily::Matern32) nu = 1.5;
  if (kernel.family == KernelFamily::Matern52) nu = 2.5;
  // Computed in logs: Γ and ℓ^{2ν} overflow quickly for small ℓ.
  const double log_c = std::log(s2) + d * std::log(2.0) + 0.5 * d * std::log(pi) +
                       std::lgamma(nu + 0.5 * d) + nu * std::log(2.0 * nu) - std::lgamma(nu) -
                       2.0 * nu * std::log(ell);
  return std::exp(log_c - (nu + 0.5 * d) * std::log(2.0 * nu / (ell * ell) + omega * omega));
}

Vector spectral_prior_variances(const SineBasis& basis, const Kernel& kernel) {
  Vector v(basis.size());
  for (Eigen::Index i = 0; i < basis.size(); ++i) {
    v(i) = spectral_density(kernel, basis.frequency(i), static_cast<int>(basis.dim()));
  }
  return v;
}

// ---------------------------------------------------------------- BasisModel

BasisModel::BasisModel(SineBasis basis, std::vector<Vector> coef_mean, std::vector<Matrix> coef_cov,
                       double process_noise_var, bool uses_inputs, MeasurementKind measurement,
                       double meas_noise_var)
    : basis_(std::move(basis)),
      coef_mean_(std::move(coef_mean)),
      coef_cov_(std::move(coef_cov)),
      process_noise_var_(process_noise_var),
      uses_inputs_(uses_inputs),
      measurement_(measurement),
      meas_noise_var_(meas_noise_var) {
  if (coef_mean_.empty() || coef_mean_.size() != coef_cov_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "need one coefficient mean and covariance per state");
  }
  const Eigen::Index expect = state_dim() + (uses_inputs_ ? 1 : 0);
  if (basis_.dim() != expect) {
    throw Error(ErrorCode::DimensionMismatch, "basis dimension " + std::to_string(basis_.dim()) +
                                                  ", expected " + std::to_string(expect));
  }
  for (std::size_t j = 0; j < coef_mean_.size(); ++j) {
    if (coef_mean_[j].size() != basis_.size() || coef_cov_[j].rows() != basis_.size() ||
        coef_cov_[j].cols() != basis_.size()) {
      throw Error(ErrorCode::DimensionMismatch, "coefficient size does not match basis size");
    }
  }
  if (!(process_noise_var_ >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "process noise variance must be >= 0");
  }
  if (measurement_ == MeasurementKind::Learned) {
    throw Error(ErrorCode::InvalidArgument, "basis models support only the known measurement");
  }
  if (measurement_ != MeasurementKind::None && !(meas_noise_var_ > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "measurement noise variance must be positive");
  }
}

BasisPrediction BasisModel::predict(const Eigen::Ref<const Vector>& z) const {
  if (!basis_.contains(z)) {
    throw Error(ErrorCode::StateOutsideDomain, "regressor outside the basis domain");
  }
  const Vector phi = basis_.evaluate(z);
  BasisPrediction out{Vector(state_dim()), Vector(state_dim())};
  for (Eigen::Index j = 0; j < state_dim(); ++j) {
    const auto sj = static_cast<std::size_t>(j);
    out.mean(j) = phi.dot(coef_mean_[sj]);
    out.variance(j) = std::max(0.0, phi.dot(coef_cov_[sj] * phi));
  }
  return out;
}

Matrix BasisModel::transition_mean(const Matrix& states, double input) const {
  check_state_cols(states, state_dim());
  const Matrix z = with_input(states, input, uses_inputs_);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    if (!basis_.contains(z.row(r).transpose())) {
      throw Error(ErrorCode::StateOutsideDomain, "state outside the basis domain");
    }
  }
  const Matrix phi = basis_.design(z);
  Matrix out(states.rows(), state_dim());
  for (Eigen::Index j = 0; j < state_dim(); ++j) {
    out.col(j) = phi * coef_mean_[static_cast<std::size_t>(j)];
  }
  return out;
}

BasisModel fit_basis_gpss_observed(const StateTrajectory& traj, const SineBasis& basis,
                                   const BasisFitOptions& options) {
  traj.validate();
  const Eigen::Index n = traj.steps();
  if (n < 1) throw Error(ErrorCode::SequenceTooShort, "need at least one transition");
  const Matrix z = transition_regressors(traj);
  if (z.cols() != basis.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "basis dimension " + std::to_string(basis.dim()) +
                                                  " != regressor dimension " +
                                                  std::to_string(z.cols()));
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    if (!basis.contains(z.row(r).transpose())) {
      throw Error(ErrorCode::StateOutsideDomain,
                  "regressor at k=" + std::to_string(r) + " lies outside the basis domain");
    }
  }
  const Vector& prior = options.prior_var;
  if (prior.size() != basis.size() || !(prior.array() > 0.0).all() || !prior.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "prior_var must hold one positive variance per basis function");
  }
  const double s2 = options.noise_var;
  if (!(std::isfinite(s2) && s2 > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "noise_var must be positive");
  }

  // Posterior precision Λ⁻¹ + ΦᵀΦ/σ² is formed in the whitened coordinates
  // c = Λ^{1/2} v, where it reads I + Λ^{1/2}ΦᵀΦΛ^{1/2}/σ² and stays well
  // conditioned even when prior variances span many decades.
  const Matrix phi = basis.design(z);
  const Vector sd = prior.array().sqrt();
  const Matrix phi_w = phi * sd.asDiagonal();
  Matrix precision = phi_w.transpose() * phi_w / s2;
  precision.diagonal().array() += 1.0;
  const CholeskyFactor chol = cholesky(symmetrize(precision));
  const Matrix cov_w = solve_spd(chol, Matrix(Matrix::Identity(basis.size(), basis.size())));
  Matrix cov = sd.asDiagonal() * cov_w * sd.asDiagonal();
  cov = symmetrize(cov);

  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (Eigen::Index j = 0; j < traj.state_dim(); ++j) {
    const Vector t = traj.states.col(j).tail(n);
    const Vector v = solve_spd(chol, Vector(phi_w.transpose() * t / s2));
    means.push_back(sd.cwiseProduct(v));
    covs.push_back(cov);
  }
  const MeasurementKind meas =
      options.measurement_noise_var ? MeasurementKind::FirstState : MeasurementKind::None;
  return BasisModel(basis, std::move(means), std::move(covs), s2, traj.inputs.has_value(), meas,
                    options.measurement_noise_var.value_or(0.0));
}

// ---------------------------------------------------------------- simulate

namespace {

void check_inputs(const StateSpaceModel& model, std::span<const double> inputs, std::size_t need) {
  if (model.uses_inputs() && inputs.size() < need) {
    throw Error(ErrorCode::MissingInput, "model uses inputs: need " + std::to_string(need) +
                                             ", got " + std::to_string(inputs.size()));
  }
}

// Stream layout for CounterRng draws.
constexpr std::uint64_t kMeasurementStream = 0xffff'0000'0000'0000ULL;
constexpr std::uint64_t kResampleStream = 0xfffe'0000'0000'0000ULL;
const double kUnderflowLog = std::log(std::numeric_limits<double>::min());

}  // namespace

StateTrajectory simulate(const StateSpaceModel& model, const Vector& x0,
                         std::span<const double> inputs, int horizon, SimulateMode mode,
                         std::uint64_t seed) {
  if (horizon < 1) throw Error(ErrorCode::InvalidArgument, "horizon must be >= 1");
  const Eigen::Index dx = model.state_dim();
  if (x0.size() != dx) {
    throw Error(ErrorCode::DimensionMismatch, "x0 has dimension " + std::to_string(x0.size()) +
                                                  ", model state dimension is " +
                                                  std::to_string(dx));
  }
  if (!x0.allFinite()) throw Error(ErrorCode::InvalidArgument, "x0 must be finite");
  check_inputs(model, inputs, static_cast<std::size_t>(horizon));

  const CounterRng rng(seed);
  const bool sample = mode == SimulateMode::Sample;
  const Vector q_sd = model.process_noise_var().array().sqrt();
  const double r_sd = model.has_measurement() ? std::sqrt(model.measurement_noise_var()) : 0.0;

  StateTrajectory traj;
  traj.states.resize(horizon + 1, dx);
  traj.states.row(0) = x0.transpose();
  if (model.uses_inputs()) {
    traj.inputs = Vector(horizon);
    for (int k = 0; k < horizon; ++k) (*traj.inputs)(k) = inputs[static_cast<std::size_t>(k)];
  }
  if (model.has_measurement()) traj.outputs = Vector(horizon);

  for (int k = 0; k < horizon; ++k) {
    const double u = model.uses_inputs() ? inputs[static_cast<std::size_t>(k)] : 0.0;
    Matrix next = model.transition_mean(traj.states.row(k), u);
    if (sample) {
      for (Eigen::Index j = 0; j < dx; ++j) {
        next(0, j) += q_sd(j) * rng.normal(static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(k));
      }
    }
    traj.states.row(k + 1) = next.row(0);
    if (traj.outputs) {
      double y = model.measurement_mean(next)(0);
      if (sample) y += r_sd * rng.normal(kMeasurementStream, static_cast<std::uint64_t>(k));
      (*traj.outputs)(k) = y;
    }
  }
  return traj;
}

// ---------------------------------------------------------------- particle filter

std::vector<Eigen::Index> systematic_resample(const Vector& weights, double u0) {
  const Eigen::Index p = weights.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(p));
  double cumulative = weights(0);
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < p; ++i) {
    const double target = (static_cast<double>(i) + u0) / static_cast<double>(p);
    while (target > cumulative && j < p - 1) cumulative += weights(++j);
    idx[static_cast<std::size_t>(i)] = j;
  }
  return idx;
}

PfResult bootstrap_pf(const StateSpaceModel& model, std::span<const double> outputs,
                      std::span<const double> inputs, const PfOptions& options) {
  const int p = options.particles;
  if (p < 2) throw Error(ErrorCode::InvalidArgument, "particle filter needs P >= 2");
  if (!model.has_measurement()) {
    throw Error(ErrorCode::InvalidArgument, "particle filter needs a measurement channel");
  }
  const Eigen::Index dx = model.state_dim();
  if (options.initial_mean.size() != dx || options.initial_var.size() != dx) {
    throw Error(ErrorCode::DimensionMismatch, "initial mean/variance must have the state dimension");
  }
  if (!(options.initial_var.array() >= 0.0).all()) {
    throw Error(ErrorCode::InvalidArgument, "initial variance must be >= 0");
  }
  const auto n = static_cast<Eigen::Index>(outputs.size());
  check_inputs(model, inputs, outputs.size());

  const CounterRng rng(options.seed);
  const Vector q_sd = model.process_noise_var().array().sqrt();
  const Vector p0_sd = options.initial_var.array().sqrt();
  const double r = model.measurement_noise_var();
  const auto draw = [&](Eigen::Index i, Eigen::Index k, Eigen::Index j) {
    return rng.normal(static_cast<std::uint64_t>(i),
                      static_cast<std::uint64_t>(k * dx + j));
  };

  Matrix x(p, dx);
  for (int i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < dx; ++j) {
      x(i, j) = options.initial_mean(j) + p0_sd(j) * draw(i, 0, j);
    }
  }
  Vector w = Vector::Constant(p, 1.0 / p);

  PfResult res;
  res.means.resize(n, dx);
  res.variances.resize(n, dx);
  res.ess.reserve(static_cast<std::size_t>(n));
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * r);

  for (Eigen::Index k = 1; k <= n; ++k) {
    const double u = model.uses_inputs() ? inputs[static_cast<std::size_t>(k - 1)] : 0.0;
    x = model.transition_mean(x, u);
    for (int i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < dx; ++j) x(i, j) += q_sd(j) * draw(i, k, j);
    }

    const double y = outputs[static_cast<std::size_t>(k - 1)];
    const Vector g = model.measurement_mean(x);
    Vector logw(p);
    for (int i = 0; i < p; ++i) {
      const double e = y - g(i);
      logw(i) = std::log(w(i)) + log_norm - 0.5 * e * e / r;
    }
    const double mx = logw.maxCoeff();
    // Degenerate when every particle's likelihood would underflow a double
    // (all residuals beyond ~37.6 measurement standard deviations).
    double best_exponent = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < p; ++i) {
      const double e = y - g(i);
      best_exponent = std::max(best_exponent, -0.5 * e * e / r);
    }
    if (!std::isfinite(mx) || best_exponent < kUnderflowLog) {
      throw Error(ErrorCode::DegenerateWeights,
                  "all particle weights underflowed at k=" + std::to_string(k));
    }
    const Vector shifted = (logw.array() - mx).exp();
    const double sum = shifted.sum();
    res.log_likelihood += mx + std::log(sum);
    w = shifted / sum;

    const Eigen::RowVectorXd mean = w.transpose() * x;
    res.means.row(k - 1) = mean;
    res.variances.row(k - 1) =
        (w.transpose() * (x.rowwise() - mean).array().square().matrix()).cwiseMax(0.0);
    const double ess = 1.0 / w.squaredNorm();
    res.ess.push_back(ess);

    if (ess < 0.5 * p) {
      const auto idx = systematic_resample(w, rng.uniform(kResampleStream, static_cast<std::uint64_t>(k)));
      Matrix resampled(p, dx);
      for (int i = 0; i < p; ++i) resampled.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
      x = std::move(resampled);
      w.setConstant(1.0 / p);
      ++res.resamples;
    }
  }
  res.final_particles = ParticleSet{std::move(x), std::move(w)};
  return res;
}

}  // namespace gpsysid
