#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gpsysid/kernels.hpp"
#include "gpsysid/numerics.hpp"

namespace gpsysid {

/// Sampled input/output series; `inputs` is empty for output-only series.
struct SeriesData {
  std::vector<double> times;
  std::vector<double> inputs;
  std::vector<double> outputs;
};

/// Rows k = 0..N of a state trajectory with the input and measurement taken
/// at the same k.
struct StateSeries {
  Matrix states;
  std::vector<double> inputs;
  std::vector<double> outputs;
};

/// sin(t) at N sorted uniform times in [0, t_max] plus Gaussian noise.
SeriesData generate_sinusoid(int n, double noise_std, std::uint64_t seed,
                             double t_max = 6.283185307179586);

struct LinearArxParams {
  double a = 0.9;
  double b = 0.5;
  double noise_std = 0.05;
  /// Input is piecewise constant, redrawn uniformly in [-1, 1] every `hold` samples.
  int hold = 25;
};

/// y_k = a·y_{k-1} + b·u_{k-1} + ε_k with y_0 = ε_0.
SeriesData generate_linear_arx(int n, const LinearArxParams& params, std::uint64_t seed);

/// Logistic map whose gain is modulated by the input:
/// s_k = (3.2 + 0.6·u_{k-1})·s_{k-1}·(1 − s_{k-1}), y_k = s_k + noise.
SeriesData generate_logistic_narx(int n, double noise_std, std::uint64_t seed);

/// GP draw on the grid t_k = k·dt plus observation noise. Matérn draws use
/// the exact state-space recursion; SE uses a dense Cholesky factor.
SeriesData generate_gp_draw(int n, const Kernel& kernel, double dt, double noise_std,
                            std::uint64_t seed);

struct PendulumParams {
  double process_std = 0.01;
  double measurement_std = 0.05;
  double input_gain = 0.0;
  double x0 = 0.5;
};

/// x_{k+1} = x_k + 0.1·sin(x_k) + input_gain·u_k + w_k, y_k = x_k + e_k.
StateSeries generate_pendulum(int n, const PendulumParams& params, std::uint64_t seed);

}  // namespace gpsysid
