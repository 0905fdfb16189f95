#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "gpsysid/gpss.hpp"

namespace gpsysid::testing {

// x_{k+1} = a x_k + b u_k + w, y_k = x_k + e: written directly so the
// particle filter can be checked against an exact Kalman filter.
class LinearGaussian final : public StateSpaceModel {
 public:
  LinearGaussian(double a, double b, double q, double r) : a_(a), b_(b), q_(q), r_(r) {}

  Eigen::Index state_dim() const override { return 1; }
  bool uses_inputs() const override { return b_ != 0.0; }
  Matrix transition_mean(const Matrix& x, double u) const override {
    return (a_ * x.array() + b_ * u).matrix();
  }
  Vector process_noise_var() const override { return Vector::Constant(1, q_); }
  bool has_measurement() const override { return true; }
  Vector measurement_mean(const Matrix& x) const override { return x.col(0); }
  double measurement_noise_var() const override { return r_; }

 private:
  double a_, b_, q_, r_;
};

struct ScalarKalmanResult {
  std::vector<double> mean;
  std::vector<double> var;
  double log_likelihood = 0.0;
};

// Filtered moments of x_1..x_N from y_1..y_N with x_0 ~ N(m0, p0).
inline ScalarKalmanResult scalar_kalman(double a, double b, double q, double r, double m0,
                                        double p0, const std::vector<double>& y,
                                        const std::vector<double>& u) {
  ScalarKalmanResult out;
  double m = m0, p = p0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    m = a * m + (u.empty() ? 0.0 : b * u[k]);
    p = a * a * p + q;
    const double s = p + r;
    const double e = y[k] - m;
    out.log_likelihood += -0.5 * (std::log(2.0 * std::numbers::pi * s) + e * e / s);
    const double g = p / s;
    m += g * e;
    p = (1.0 - g) * p;
    out.mean.push_back(m);
    out.var.push_back(p);
  }
  return out;
}

}  // namespace gpsysid::testing
