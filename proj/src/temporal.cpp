#include "gpsysid/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "gpsysid/error.hpp"

namespace gpsysid {

namespace {

int state_dim_for(KernelFamily family) {
  switch (family) {
    case KernelFamily::Matern12: return 1;
    case KernelFamily::Matern32: return 2;
    case KernelFamily::Matern52: return 3;
    case KernelFamily::SquaredExponential: break;
  }
  throw Error(ErrorCode::UnsupportedKernel,
              "the squared exponential kernel has no finite state-space representation");
}

double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

Matrix psd_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

}  // namespace

LtiSde matern_to_ss(const Kernel& kernel) {
  kernel.validate();
  const int d = state_dim_for(kernel.family);
  const double nu = static_cast<double>(d) - 0.5;
  const double lambda = std::sqrt(2.0 * nu) / kernel.lengthscale;

  LtiSde sde;
  sde.drift = Matrix::Zero(d, d);
  for (int i = 0; i + 1 < d; ++i) sde.drift(i, i + 1) = 1.0;
  // Characteristic polynomial (s + λ)^d.
  for (int j = 0; j < d; ++j) sde.drift(d - 1, j) = -binomial(d, j) * std::pow(lambda, d - j);
  sde.noise_input = Vector::Zero(d);
  sde.noise_input[d - 1] = 1.0;
  sde.measurement = Eigen::RowVectorXd::Zero(d);
  sde.measurement[0] = 1.0;

  // Stationary covariance for unit spectral density, then scale q so the
  // marginal variance C·P∞·Cᵀ equals s².
  const Matrix bbt = sde.noise_input * sde.noise_input.transpose();
  const Matrix unit_cov = solve_lyapunov(sde.drift, bbt);
  sde.spectral_density = kernel.variance() / unit_cov(0, 0);
  sde.stationary_cov = sde.spectral_density * unit_cov;
  return sde;
}

DiscreteStep discretize(const LtiSde& sde, double dt) {
  if (!(dt >= 0.0)) throw Error(ErrorCode::InvalidArgument, "discretize: negative time step");
  const Eigen::Index d = sde.state_dim();
  if (dt == 0.0) return {Matrix::Identity(d, d), Matrix::Zero(d, d)};
  Matrix f = expm(sde.drift * dt);
  Matrix q = symmetrize(sde.stationary_cov - f * sde.stationary_cov * f.transpose());
  return {std::move(f), std::move(q)};
}

KalmanTrace kalman_smooth(const Kernel& kernel, std::span<const double> times,
                          std::span<const double> outputs, double noise_variance,
                          std::span<const double> test_times) {
  const LtiSde sde = matern_to_ss(kernel);
  if (times.size() != outputs.size()) {
    throw Error(ErrorCode::DimensionMismatch, "times and outputs differ in length");
  }
  if (!(noise_variance >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative noise variance");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] == times[i - 1]) {
      throw Error(ErrorCode::DuplicateTimes,
                  "observation time " + std::to_string(times[i]) + " appears twice");
    }
    if (times[i] < times[i - 1]) {
      throw Error(ErrorCode::InvalidArgument, "observation times must be increasing");
    }
  }

  // Merge events; at equal times observations come before test points.
  struct Event {
    double time;
    long observation;
  };
  std::vector<Event> events;
  events.reserve(times.size() + test_times.size());
  for (std::size_t i = 0; i < times.size(); ++i) events.push_back({times[i], static_cast<long>(i)});
  for (double t : test_times) events.push_back({t, -1});
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.observation >= 0 && b.observation < 0;
  });

  const Eigen::Index d = sde.state_dim();
  const Matrix identity = Matrix::Identity(d, d);
  const auto& c = sde.measurement;
  const std::size_t n = events.size();

  KalmanTrace trace;
  trace.times.resize(n);
  trace.observation.resize(n);
  trace.predicted.resize(n);
  trace.filtered.resize(n);
  trace.smoothed.resize(n);
  std::vector<Matrix> transitions(n);

  double nll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    trace.times[i] = events[i].time;
    trace.observation[i] = events[i].observation;
    GaussState pred;
    if (i == 0) {
      pred = {Vector::Zero(d), sde.stationary_cov};
      transitions[i] = identity;
    } else {
      const DiscreteStep step = discretize(sde, events[i].time - events[i - 1].time);
      const auto& prev = trace.filtered[i - 1];
      pred.mean = step.transition * prev.mean;
      pred.cov = symmetrize(step.transition * prev.cov * step.transition.transpose() +
                            step.process_cov);
      transitions[i] = step.transition;
    }
    trace.predicted[i] = pred;

    if (events[i].observation < 0) {
      trace.filtered[i] = pred;
      continue;
    }
    const double y = outputs[static_cast<std::size_t>(events[i].observation)];
    const double innovation = y - c.dot(pred.mean);
    const Vector pct = pred.cov * c.transpose();
    const double s = c.dot(pct) + noise_variance;
    if (!(s > 0.0)) {
      throw Error(ErrorCode::NumericalInconsistency, "innovation variance is not positive");
    }
    nll += 0.5 * std::log(2.0 * std::numbers::pi * s) + 0.5 * innovation * innovation / s;
    const Vector gain = pct / s;
    // Joseph form keeps the covariance symmetric PSD.
    const Matrix ikc = identity - gain * c;
    GaussState post;
    post.mean = pred.mean + gain * innovation;
    post.cov = symmetrize(ikc * pred.cov * ikc.transpose() +
                          noise_variance * gain * gain.transpose());
    trace.filtered[i] = std::move(post);
  }
  trace.nll = nll;

  if (n == 0) return trace;
  trace.smoothed[n - 1] = trace.filtered[n - 1];
  for (std::size_t ii = n - 1; ii-- > 0;) {
    const auto& filt = trace.filtered[ii];
    const auto& pred_next = trace.predicted[ii + 1];
    const auto& smooth_next = trace.smoothed[ii + 1];
    Matrix gain;
    if (trace.times[ii + 1] == trace.times[ii]) {
      gain = identity;
    } else {
      // G = P·Fᵀ·Pp⁻¹, solved as Pp·Gᵀ = F·P.
      const Matrix fp = transitions[ii + 1] * filt.cov;
      gain = pred_next.cov.completeOrthogonalDecomposition().solve(fp).transpose();
    }
    GaussState sm;
    sm.mean = filt.mean + gain * (smooth_next.mean - pred_next.mean);
    sm.cov = symmetrize(filt.cov + gain * (smooth_next.cov - pred_next.cov) * gain.transpose());
    trace.smoothed[ii] = std::move(sm);
  }
  return trace;
}

TemporalPosterior kalman_regress(const Kernel& kernel, std::span<const double> times,
                                 std::span<const double> outputs, double noise_variance,
                                 std::span<const double> test_times) {
  const KalmanTrace trace = kalman_smooth(kernel, times, outputs, noise_variance, test_times);
  const LtiSde sde = matern_to_ss(kernel);
  const auto& c = sde.measurement;

  // Test events appear in sorted order; map them back to caller order.
  std::vector<std::size_t> order(test_times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return test_times[a] < test_times[b]; });

  TemporalPosterior out;
  out.mean.resize(static_cast<Eigen::Index>(test_times.size()));
  out.variance.resize(static_cast<Eigen::Index>(test_times.size()));
  out.nll = trace.nll;
  std::size_t next = 0;
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    if (trace.observation[i] >= 0) continue;
    const auto& sm = trace.smoothed[i];
    const auto slot = static_cast<Eigen::Index>(order[next++]);
    out.mean[slot] = c.dot(sm.mean);
    out.variance[slot] = std::max(0.0, c.dot(sm.cov * c.transpose()));
  }
  return out;
}

Vector sample_matern_path(const Kernel& kernel, std::span<const double> times,
                          std::mt19937_64& rng) {
  const LtiSde sde = matern_to_ss(kernel);
  const Eigen::Index d = sde.state_dim();
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](const Matrix& root) {
    Vector xi(d);
    for (Eigen::Index i = 0; i < d; ++i) xi[i] = normal(rng);
    return Vector(root * xi);
  };
  Vector out(static_cast<Eigen::Index>(times.size()));
  Vector x;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (k == 0) {
      x = draw(psd_sqrt(sde.stationary_cov));
    } else {
      if (times[k] < times[k - 1]) {
        throw Error(ErrorCode::InvalidArgument, "sample times must be sorted");
      }
      const DiscreteStep step = discretize(sde, times[k] - times[k - 1]);
      x = step.transition * x + draw(psd_sqrt(step.process_cov));
    }
    out[static_cast<Eigen::Index>(k)] = sde.measurement.dot(x);
  }
  return out;
}

}  // namespace gpsysid
