#include "gpsysid/generators.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gpsysid/error.hpp"
#include "gpsysid/temporal.hpp"

namespace gpsysid {

namespace {

void require_count(int n) {
  if (n < 0) throw Error(ErrorCode::InvalidArgument, "sample count must be nonnegative");
}

}  // namespace

SeriesData generate_sinusoid(int n, double noise_std, std::uint64_t seed, double t_max) {
  require_count(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, t_max);
  std::normal_distribution<double> normal(0.0, 1.0);
  SeriesData out;
  out.times.resize(static_cast<std::size_t>(n));
  for (auto& t : out.times) t = uniform(rng);
  std::sort(out.times.begin(), out.times.end());
  for (double t : out.times) out.outputs.push_back(std::sin(t) + noise_std * normal(rng));
  return out;
}

SeriesData generate_linear_arx(int n, const LinearArxParams& p, std::uint64_t seed) {
  require_count(n);
  if (p.hold < 1) throw Error(ErrorCode::InvalidArgument, "input hold must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> level(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  SeriesData out;
  double u = 0.0;
  for (int k = 0; k < n; ++k) {
    if (k % p.hold == 0) u = level(rng);
    out.times.push_back(static_cast<double>(k));
    out.inputs.push_back(u);
  }
  for (int k = 0; k < n; ++k) {
    const double e = p.noise_std * normal(rng);
    const double prev = k > 0 ? p.a * out.outputs.back() + p.b * out.inputs[k - 1] : 0.0;
    out.outputs.push_back(prev + e);
  }
  return out;
}

SeriesData generate_logistic_narx(int n, double noise_std, std::uint64_t seed) {
  require_count(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  SeriesData out;
  double s = 0.3;
  for (int k = 0; k < n; ++k) {
    if (k > 0) s = (3.2 + 0.6 * out.inputs.back()) * s * (1.0 - s);
    out.times.push_back(static_cast<double>(k));
    out.inputs.push_back(uniform(rng));
    out.outputs.push_back(s + noise_std * normal(rng));
  }
  return out;
}

SeriesData generate_gp_draw(int n, const Kernel& kernel, double dt, double noise_std,
                            std::uint64_t seed) {
  require_count(n);
  kernel.validate();
  std::mt19937_64 rng(seed);
  SeriesData out;
  for (int k = 0; k < n; ++k) out.times.push_back(static_cast<double>(k) * dt);
  Vector f;
  if (is_matern(kernel.family)) {
    f = sample_matern_path(kernel, out.times, rng);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    const Matrix t = Eigen::Map<const Vector>(out.times.data(), n);
    const auto chol = cholesky(gram(kernel, t));
    Vector w(n);
    for (int k = 0; k < n; ++k) w[k] = normal(rng);
    f = chol.lower() * w;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < n; ++k) out.outputs.push_back(f[k] + noise_std * normal(rng));
  return out;
}

StateSeries generate_pendulum(int n, const PendulumParams& p, std::uint64_t seed) {
  require_count(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> level(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  StateSeries out;
  out.states.resize(n, 1);
  double x = p.x0;
  for (int k = 0; k < n; ++k) {
    const double u = level(rng);
    out.states(k, 0) = x;
    out.inputs.push_back(u);
    out.outputs.push_back(x + p.measurement_std * normal(rng));
    x = x + 0.1 * std::sin(x) + p.input_gain * u + p.process_std * normal(rng);
  }
  return out;
}

}  // namespace gpsysid
