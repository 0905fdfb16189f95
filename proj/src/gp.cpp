#include "gpsysid/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "gpsysid/error.hpp"

namespace gpsysid {

namespace {

constexpr double kClampRelTol = 1e-9;

double sample_std(const Vector& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

// Clamps tiny negative variances to zero; larger negatives signal a broken
// factorization.
void clamp_variances(Eigen::Ref<Vector> var, double prior_variance) {
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (var[i] < 0.0) {
      if (var[i] < -kClampRelTol * prior_variance) {
        throw Error(ErrorCode::NumericalInconsistency,
                    "predict: posterior variance " + std::to_string(var[i]) + " is negative");
      }
      var[i] = 0.0;
    }
  }
}

Matrix noisy_gram(const Dataset& dataset, const Kernel& kernel) {
  Matrix k = gram(kernel, dataset.inputs);
  k.diagonal().array() += dataset.noise_variance;
  return k;
}

}  // namespace

void Dataset::validate() const {
  if (inputs.rows() < 1) throw Error(ErrorCode::InvalidArgument, "dataset is empty");
  if (inputs.rows() != outputs.size()) {
    throw Error(ErrorCode::DimensionMismatch, "dataset has " + std::to_string(inputs.rows()) +
                                                  " input rows but " +
                                                  std::to_string(outputs.size()) + " outputs");
  }
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
    throw Error(ErrorCode::InvalidArgument, "noise variance must be finite and nonnegative");
  }
  if (!inputs.allFinite() || !outputs.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "dataset contains non-finite values");
  }
}

TrainedGP::TrainedGP(Kernel kernel, MeanFunction mean, Matrix inputs, Vector outputs,
                     CholeskyFactor chol, Vector alpha, double noise_variance)
    : kernel_(kernel),
      mean_(mean),
      train_inputs_(std::move(inputs)),
      train_outputs_(std::move(outputs)),
      chol_(std::move(chol)),
      alpha_(std::move(alpha)),
      noise_variance_(noise_variance) {}

TrainedGP TrainedGP::fit(const Dataset& dataset, const Kernel& kernel, const MeanFunction& mean) {
  dataset.validate();
  kernel.validate();
  CholeskyFactor chol = cholesky(noisy_gram(dataset, kernel));
  const Vector residual = dataset.outputs - mean.evaluate(dataset.inputs);
  Vector alpha = solve_spd(chol, residual);
  return TrainedGP(kernel, mean, dataset.inputs, dataset.outputs, std::move(chol),
                   std::move(alpha), dataset.noise_variance);
}

void TrainedGP::check_test_dim(const Matrix& test_inputs) const {
  if (test_inputs.cols() != train_inputs_.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "predict: test inputs have dimension " + std::to_string(test_inputs.cols()) +
                    ", model expects " + std::to_string(train_inputs_.cols()));
  }
}

namespace {

// One contiguous dot product per test point, so a point's mean does not
// depend on how many other points share the batch.
Vector cross_mean(const Matrix& cross_t, const Vector& alpha) {
  Vector m(cross_t.cols());
  for (Eigen::Index i = 0; i < cross_t.cols(); ++i) m(i) = cross_t.col(i).dot(alpha);
  return m;
}

}  // namespace

Vector TrainedGP::predict_mean(const Matrix& test_inputs) const {
  check_test_dim(test_inputs);
  return mean_.evaluate(test_inputs) + cross_mean(gram(kernel_, train_inputs_, test_inputs), alpha_);
}

Posterior TrainedGP::predict(const Matrix& test_inputs, PredictOptions options) const {
  check_test_dim(test_inputs);
  const Matrix cross_t = gram(kernel_, train_inputs_, test_inputs);  // N×M
  const Matrix v = solve_lower(chol_, cross_t);                        // N×M

  Posterior post;
  post.mean = mean_.evaluate(test_inputs) + cross_mean(cross_t, alpha_);
  post.full = options.full_covariance;
  const double s2 = kernel_.variance();
  if (options.full_covariance) {
    Matrix cov = gram(kernel_, test_inputs) - v.transpose() * v;
    cov = symmetrize(cov);
    Vector diag = cov.diagonal();
    clamp_variances(diag, s2);
    cov.diagonal() = diag;
    if (options.observation_noise) cov.diagonal().array() += noise_variance_;
    post.covariance = std::move(cov);
  } else {
    Vector diag = (s2 - v.colwise().squaredNorm().array()).matrix().transpose();
    clamp_variances(diag, s2);
    if (options.observation_noise) diag.array() += noise_variance_;
    post.diagonal = std::move(diag);
  }
  return post;
}

NllResult nll(const Dataset& dataset, const Kernel& kernel, const MeanFunction& mean) {
  dataset.validate();
  kernel.validate();
  const CholeskyFactor chol = cholesky(noisy_gram(dataset, kernel));
  const Vector residual = dataset.outputs - mean.evaluate(dataset.inputs);
  const Vector alpha = solve_spd(chol, residual);
  const auto n = static_cast<double>(dataset.size());

  NllResult out;
  out.value = 0.5 * logdet(chol) + 0.5 * n * std::log(2.0 * std::numbers::pi) +
              0.5 * residual.dot(alpha);

  // ∂nll/∂θ = ½ tr((K⁻¹ − ααᵀ) ∂K/∂θ)
  const Matrix k_inv = solve_spd(chol, Matrix(Matrix::Identity(dataset.size(), dataset.size())));
  const Matrix inner = k_inv - alpha * alpha.transpose();
  const auto dk = grad_log_hyper(kernel, dataset.inputs, dataset.inputs);
  out.grad[0] = 0.5 * inner.cwiseProduct(dk[0]).sum();
  out.grad[1] = 0.5 * inner.cwiseProduct(dk[1]).sum();
  // ∂(σ_n² I)/∂log σ_n = 2σ_n² I
  out.grad[2] = dataset.noise_variance * inner.trace();
  return out;
}

NllResult nll(const Dataset& dataset, KernelFamily family, const HyperVector& hyper,
              const MeanFunction& mean) {
  Dataset with_noise{dataset.inputs, dataset.outputs, hyper.noise_variance()};
  return nll(with_noise, hyper.kernel(family), mean);
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::GradientTolerance: return "gradient_tolerance";
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::Stalled: return "stalled";
  }
  return "unknown";
}

HyperVector default_init(const Dataset& dataset, const MeanFunction& mean) {
  const Vector residual = dataset.outputs - mean.evaluate(dataset.inputs);
  double s = sample_std(residual);
  if (!(s > 1e-8)) s = 1.0;
  double ell = 0.0;
  for (Eigen::Index j = 0; j < dataset.inputs.cols(); ++j) ell += sample_std(dataset.inputs.col(j));
  ell = dataset.inputs.cols() > 0 ? ell / static_cast<double>(dataset.inputs.cols()) : 1.0;
  if (!(ell > 1e-8)) ell = 1.0;
  return {{std::log(s), std::log(ell), std::log(0.1 * s)}};
}

namespace {

struct Evaluation {
  double value = std::numeric_limits<double>::infinity();
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
  bool ok = false;
};

class HyperObjective {
 public:
  HyperObjective(const Dataset& dataset, KernelFamily family, const MeanFunction& mean)
      : dataset_(dataset), family_(family), mean_(mean) {}

  Evaluation operator()(const Eigen::Vector3d& x) const {
    Evaluation e;
    try {
      const NllResult r = nll(dataset_, family_, HyperVector::from_vector(x), mean_);
      if (std::isfinite(r.value) && r.grad.allFinite()) {
        e.value = r.value;
        e.grad = r.grad;
        e.ok = true;
      }
    } catch (const Error& err) {
      if (err.code() != ErrorCode::NotPositiveDefinite && err.code() != ErrorCode::InvalidArgument) {
        throw;
      }
    }
    return e;
  }

 private:
  const Dataset& dataset_;
  KernelFamily family_;
  const MeanFunction& mean_;
};

Eigen::Vector3d project(const Eigen::Vector3d& x, double lo, double hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

Eigen::Vector3d projected_gradient(const Eigen::Vector3d& x, const Eigen::Vector3d& g, double lo,
                                   double hi) {
  Eigen::Vector3d pg = g;
  for (int i = 0; i < 3; ++i) {
    if ((x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0)) pg[i] = 0.0;
  }
  return pg;
}

// Box-projected BFGS with Armijo backtracking (quadratic interpolation).
StartOutcome run_start(const HyperObjective& objective, const HyperVector& init,
                       const OptimizerConfig& config) {
  StartOutcome out;
  out.init = init;
  const double lo = config.log_lower;
  const double hi = config.log_upper;
  Eigen::Vector3d x = project(init.as_vector(), lo, hi);
  Evaluation cur = objective(x);
  if (!cur.ok) {
    out.failed = true;
    return out;
  }
  out.init_nll = cur.value;

  Eigen::Matrix3d h_inv = Eigen::Matrix3d::Identity();
  bool scaled = false;
  constexpr double kArmijo = 1e-4;
  constexpr double kMaxStep = 5.0;
  constexpr int kMaxLineSearch = 30;
  constexpr int kStallWindow = 10;
  constexpr double kStallRelTol = 1e-10;
  std::vector<double> history{cur.value};
  int it = 0;
  for (; it < config.max_iter; ++it) {
    const Eigen::Vector3d pg = projected_gradient(x, cur.grad, lo, hi);
    if (pg.cwiseAbs().maxCoeff() <= config.grad_tol) {
      out.converged = true;
      out.stop_reason = StopReason::GradientTolerance;
      break;
    }
    if (history.size() > kStallWindow &&
        history[history.size() - 1 - kStallWindow] - cur.value <
            kStallRelTol * (1.0 + std::abs(cur.value))) {
      out.stop_reason = StopReason::Stalled;
      break;
    }
    Eigen::Vector3d d = -h_inv * pg;
    for (int i = 0; i < 3; ++i) {
      if (pg[i] == 0.0) d[i] = 0.0;
    }
    if (d.dot(pg) >= 0.0) {
      h_inv.setIdentity();
      scaled = false;
      d = -pg;
    }
    // Before any curvature information exists, keep the first step at
    // unit length in log space.
    const double cap = scaled ? kMaxStep : 1.0;
    const double dmax = d.cwiseAbs().maxCoeff();
    if (dmax > cap) d *= cap / dmax;

    bool accepted = false;
    Eigen::Vector3d x_new;
    Evaluation next;
    double step = 1.0;
    for (int ls = 0; ls < kMaxLineSearch; ++ls) {
      x_new = project(x + step * d, lo, hi);
      next = objective(x_new);
      const double slope = cur.grad.dot(x_new - x);
      if (next.ok && next.value <= cur.value + kArmijo * slope) {
        accepted = true;
        break;
      }
      // Minimizer of the quadratic through f(0), f'(0) and f(step),
      // safeguarded to [0.1, 0.5]·step.
      double trial = 0.5 * step;
      if (next.ok) {
        const double dir_slope = cur.grad.dot(d);
        const double curvature = next.value - cur.value - dir_slope * step;
        if (curvature > 0.0) trial = -dir_slope * step * step / (2.0 * curvature);
      }
      step = std::clamp(trial, 0.1 * step, 0.5 * step);
    }
    if (!accepted) {
      if (!h_inv.isIdentity()) {
        h_inv.setIdentity();
        scaled = false;
        continue;
      }
      out.stop_reason = StopReason::Stalled;
      break;
    }

    const Eigen::Vector3d s = x_new - x;
    const Eigen::Vector3d y = next.grad - cur.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h_inv = (sy / y.squaredNorm()) * Eigen::Matrix3d::Identity();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::Matrix3d eye = Eigen::Matrix3d::Identity();
      h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    x = x_new;
    cur = next;
    history.push_back(cur.value);
  }
  out.iterations = it;
  out.hyper = HyperVector::from_vector(x);
  out.final_nll = cur.value;
  return out;
}

}  // namespace

OptimizeResult optimize_hyper(const Dataset& dataset, KernelFamily family, const HyperVector& init,
                              const OptimizerConfig& config, const MeanFunction& mean) {
  std::vector<HyperVector> inits{init};
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  for (int r = 1; r < config.restarts; ++r) {
    HyperVector perturbed = init;
    for (double& v : perturbed.values) v += jitter(rng);
    inits.push_back(perturbed);
  }
  return optimize_hyper(dataset, family, inits, config, mean);
}

OptimizeResult optimize_hyper(const Dataset& dataset, KernelFamily family,
                              const std::vector<HyperVector>& inits, const OptimizerConfig& config,
                              const MeanFunction& mean) {
  if (config.max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 1");
  if (inits.empty()) throw Error(ErrorCode::InvalidArgument, "no optimizer starting points");
  for (const auto& init : inits) {
    for (double v : init.values) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite optimizer init");
    }
  }
  Dataset checked = dataset;
  checked.noise_variance = 0.0;
  checked.validate();

  const HyperObjective objective(dataset, family, mean);
  OptimizeResult result;
  const StartOutcome* best = nullptr;
  result.starts.reserve(inits.size());
  for (const auto& init : inits) {
    result.starts.push_back(run_start(objective, init, config));
  }
  for (const auto& s : result.starts) {
    if (!s.failed && (best == nullptr || s.final_nll < best->final_nll)) best = &s;
  }
  if (best == nullptr) {
    throw Error(ErrorCode::NotPositiveDefinite,
                "optimize_hyper: every starting point failed to factorize");
  }
  result.hyper = best->hyper;
  result.kernel = best->hyper.kernel(family);
  result.noise_variance = best->hyper.noise_variance();
  result.final_nll = best->final_nll;
  result.iterations = best->iterations;
  result.converged = best->converged;
  result.stop_reason = best->stop_reason;
  const Evaluation at_best = objective(best->hyper.as_vector());
  result.grad_inf_norm = projected_gradient(best->hyper.as_vector(), at_best.grad, config.log_lower,
                                            config.log_upper)
                             .cwiseAbs()
                             .maxCoeff();
  return result;
}

}  // namespace gpsysid
