#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "gpsysid/error.hpp"
#include "gpsysid/gp.hpp"
#include "gpsysid/temporal.hpp"
#include "test_util.hpp"

using namespace gpsysid;
using namespace gpsysid::testing;

namespace {

const KernelFamily kMatern[] = {KernelFamily::Matern12, KernelFamily::Matern32,
                                KernelFamily::Matern52};

std::vector<double> sorted_uniform(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> t(static_cast<std::size_t>(n));
  for (auto& v : t) v = u(rng);
  std::sort(t.begin(), t.end());
  return t;
}

Matrix as_column(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST(MaternToSs, Matern12Scalar) {
  const Kernel k{KernelFamily::Matern12, 1.7, 0.4};
  const auto sde = matern_to_ss(k);
  ASSERT_EQ(sde.state_dim(), 1);
  EXPECT_NEAR(sde.drift(0, 0), -1.0 / 0.4, 1e-15);
  EXPECT_EQ(sde.measurement(0), 1.0);
  EXPECT_NEAR(sde.stationary_cov(0, 0), 1.7 * 1.7, 1e-12);
  EXPECT_NEAR(sde.spectral_density, 2.0 * 1.7 * 1.7 / 0.4, 1e-12);
}

TEST(MaternToSs, Invariants) {
  for (auto family : kMatern) {
    for (double ell : {0.1, 1.0, 7.0}) {
      const Kernel k{family, 2.3, ell};
      const auto sde = matern_to_ss(k);
      EXPECT_NEAR(sde.measurement * sde.stationary_cov * sde.measurement.transpose(),
                  k.variance(), 1e-9 * k.variance());
      const Matrix residual = sde.drift * sde.stationary_cov +
                              sde.stationary_cov * sde.drift.transpose() +
                              sde.spectral_density * sde.noise_input * sde.noise_input.transpose();
      EXPECT_LE(max_abs(residual), 1e-9 * std::max(1.0, max_abs(sde.stationary_cov)));
      Eigen::EigenSolver<Matrix> es(sde.drift);
      EXPECT_LT(es.eigenvalues().real().maxCoeff(), 0.0);
    }
  }
}

TEST(MaternToSs, KernelMatchingOracle) {
  for (auto family : kMatern) {
    const Kernel k{family, 1.0, 1.0};
    const auto sde = matern_to_ss(k);
    for (double tau : {0.1, 0.5, 1.0, 2.0}) {
      const double cov = sde.measurement * sde.stationary_cov *
                         expm(sde.drift.transpose() * tau) * sde.measurement.transpose();
      EXPECT_NEAR(cov, eval_distance(k, tau), 1e-8) << to_string(family) << " tau=" << tau;
    }
  }
}

TEST(MaternToSs, RejectsSquaredExponential) {
  try {
    matern_to_ss(Kernel{KernelFamily::SquaredExponential, 1.0, 1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedKernel);
  }
}

TEST(Discretize, ZeroStep) {
  const auto sde = matern_to_ss({KernelFamily::Matern52, 1.0, 0.5});
  const auto step = discretize(sde, 0.0);
  EXPECT_EQ(step.transition, Matrix::Identity(3, 3));
  EXPECT_EQ(step.process_cov, Matrix::Zero(3, 3));
}

TEST(Discretize, LargeStepReachesStationarity) {
  for (auto family : kMatern) {
    const Kernel k{family, 1.2, 0.3};
    const auto sde = matern_to_ss(k);
    const auto step = discretize(sde, 50.0 * k.lengthscale);
    EXPECT_LE(max_abs(step.transition), 1e-8);
    EXPECT_LE(max_abs(step.process_cov - sde.stationary_cov), 1e-8);
  }
}

TEST(Discretize, Matern12ClosedForm) {
  const double s = 1.3;
  const double ell = 0.7;
  const double dt = 0.25;
  const auto step = discretize(matern_to_ss({KernelFamily::Matern12, s, ell}), dt);
  EXPECT_NEAR(step.transition(0, 0), std::exp(-dt / ell), 1e-14);
  EXPECT_NEAR(step.process_cov(0, 0), s * s * (1.0 - std::exp(-2.0 * dt / ell)), 1e-13);
}

TEST(Discretize, ProcessCovarianceIsPsd) {
  for (auto family : kMatern) {
    const auto sde = matern_to_ss({family, 1.0, 1.0});
    for (double dt : {1e-4, 0.01, 0.3, 2.0}) {
      const auto q = discretize(sde, dt).process_cov;
      EXPECT_EQ(max_abs(q - q.transpose()), 0.0);
      Eigen::SelfAdjointEigenSolver<Matrix> es(q, Eigen::EigenvaluesOnly);
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    }
  }
}

TEST(KalmanRegress, NoObservationsGivesPrior) {
  const Kernel k{KernelFamily::Matern32, 1.5, 0.8};
  const std::vector<double> none;
  const std::vector<double> test{0.0, 1.0, -3.0};
  const auto post = kalman_regress(k, none, none, 0.1, test);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_EQ(post.mean[i], 0.0);
    EXPECT_NEAR(post.variance[i], k.variance(), 1e-12);
  }
  EXPECT_EQ(post.nll, 0.0);
}

TEST(KalmanRegress, SingleObservation) {
  const Kernel k{KernelFamily::Matern12, 1.1, 0.6};
  const std::vector<double> t{0.5};
  const std::vector<double> y{2.0};
  const double noise = 0.3;
  const auto post = kalman_regress(k, t, y, noise, t);
  EXPECT_NEAR(post.mean[0], k.variance() * 2.0 / (k.variance() + noise), 1e-14);
}

TEST(KalmanRegress, DuplicateTimes) {
  const std::vector<double> t{0.0, 1.0, 1.0};
  const std::vector<double> y{0.0, 1.0, 2.0};
  try {
    kalman_regress({KernelFamily::Matern32, 1.0, 1.0}, t, y, 0.1, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateTimes);
  }
  try {
    kalman_regress({KernelFamily::SquaredExponential, 1.0, 1.0}, {}, {}, 0.1, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedKernel);
  }
}

TEST(KalmanRegress, MatchesExactGp) {
  std::mt19937_64 rng(31);
  for (auto family : kMatern) {
    const Kernel k{family, 1.3, 0.7};
    const double noise = 0.05;
    const auto t = sorted_uniform(rng, 200, 0.0, 10.0);
    std::vector<double> test = sorted_uniform(rng, 50, -1.0, 11.0);
    std::shuffle(test.begin(), test.end(), rng);
    test.push_back(t[17]);  // a test point on an observation
    const Vector y = sample_matern_path(k, t, rng) + 0.2 * random_vector(rng, 200);
    std::vector<double> yv(y.data(), y.data() + y.size());

    const auto ss = kalman_regress(k, t, yv, noise, test);
    const Dataset ds{as_column(t), y, noise};
    const auto exact = TrainedGP::fit(ds, k).predict(as_column(test));
    EXPECT_LE((ss.mean - exact.mean).cwiseAbs().maxCoeff(), 1e-6 * k.magnitude);
    EXPECT_LE((ss.variance - exact.variance()).cwiseAbs().maxCoeff(), 1e-6 * k.variance());
    EXPECT_NEAR(ss.nll, nll(ds, k).value, 1e-6);
  }
}

TEST(KalmanRegress, SmoothedVarianceNotAboveFiltered) {
  std::mt19937_64 rng(37);
  for (auto family : kMatern) {
    const Kernel k{family, 1.0, 0.5};
    const auto t = sorted_uniform(rng, 80, 0.0, 8.0);
    const Vector y = sample_matern_path(k, t, rng);
    std::vector<double> yv(y.data(), y.data() + y.size());
    const auto test = sorted_uniform(rng, 20, 0.0, 8.0);
    const auto trace = kalman_smooth(k, t, yv, 0.01, test);
    const auto sde = matern_to_ss(k);
    const auto& c = sde.measurement;
    for (std::size_t i = 0; i < trace.times.size(); ++i) {
      for (const auto* st : {&trace.predicted[i], &trace.filtered[i], &trace.smoothed[i]}) {
        EXPECT_LE(max_abs(st->cov - st->cov.transpose()), 1e-10);
        Eigen::SelfAdjointEigenSolver<Matrix> es(st->cov, Eigen::EigenvaluesOnly);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
      }
      if (trace.observation[i] >= 0) {
        EXPECT_LE(c.dot(trace.smoothed[i].cov * c.transpose()),
                  c.dot(trace.filtered[i].cov * c.transpose()) + 1e-12);
      }
    }
  }
}

TEST(SampleMaternPath, MarginalVariance) {
  const Kernel k{KernelFamily::Matern32, 1.5, 0.5};
  const std::vector<double> t{0.0, 0.3, 1.0, 2.5};
  double acc = 0.0;
  const int draws = 4000;
  std::mt19937_64 rng(41);
  for (int i = 0; i < draws; ++i) {
    const Vector f = sample_matern_path(k, t, rng);
    acc += f[2] * f[2];
  }
  EXPECT_NEAR(acc / draws, k.variance(), 0.1 * k.variance());
}
