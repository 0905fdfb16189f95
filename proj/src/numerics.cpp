#include "gpsysid/numerics.hpp"

#include <array>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "gpsysid/error.hpp"

namespace gpsysid {

namespace {

void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + ": expected a square matrix, got " + std::to_string(a.rows()) +
                    "x" + std::to_string(a.cols()));
  }
}

}  // namespace

std::vector<double> default_jitter_schedule(const Matrix& a) {
  const double n = a.rows() > 0 ? static_cast<double>(a.rows()) : 1.0;
  const double scale = std::abs(a.trace()) / n;
  return {0.0, 1e-10 * scale, 1e-8 * scale, 1e-6 * scale};
}

CholeskyFactor cholesky(const Matrix& a) {
  const auto schedule = default_jitter_schedule(a);
  return cholesky(a, schedule);
}

CholeskyFactor cholesky(const Matrix& a, std::span<const double> jitter_schedule) {
  require_square(a, "cholesky");
  if (!a.allFinite()) throw Error(ErrorCode::InvalidArgument, "cholesky: non-finite entries");
  const double amax = a.cwiseAbs().maxCoeff();
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * amax) {
    throw Error(ErrorCode::InvalidArgument, "cholesky: matrix is not symmetric");
  }

  const Eigen::Index n = a.rows();
  for (double jitter : jitter_schedule) {
    if (!(jitter >= 0.0)) throw Error(ErrorCode::InvalidArgument, "cholesky: negative jitter");
    Matrix work = a;
    work.diagonal().array() += jitter;
    Eigen::LLT<Matrix, Eigen::Lower> llt(work);
    if (llt.info() != Eigen::Success) continue;
    Matrix lower = llt.matrixL();
    // LLT accepts tiny positive pivots that are only rounding noise; require a
    // strictly positive, finite diagonal.
    bool ok = lower.allFinite();
    for (Eigen::Index i = 0; ok && i < n; ++i) ok = lower(i, i) > 0.0;
    if (ok) return CholeskyFactor(std::move(lower), jitter);
  }
  throw Error(ErrorCode::NotPositiveDefinite,
              "cholesky: all " + std::to_string(jitter_schedule.size()) +
                  " jitter levels failed for " + std::to_string(n) + "x" + std::to_string(n) +
                  " matrix");
}

Matrix solve_lower(const CholeskyFactor& factor, const Matrix& b) {
  if (b.rows() != factor.size()) {
    throw Error(ErrorCode::DimensionMismatch, "solve: factor is " + std::to_string(factor.size()) +
                                                  " but rhs has " + std::to_string(b.rows()) +
                                                  " rows");
  }
  return factor.lower().triangularView<Eigen::Lower>().solve(b);
}

Matrix solve_spd(const CholeskyFactor& factor, const Matrix& b) {
  Matrix z = solve_lower(factor, b);
  return factor.lower().transpose().triangularView<Eigen::Upper>().solve(z);
}

Vector solve_spd(const CholeskyFactor& factor, const Vector& b) {
  return solve_spd(factor, Matrix(b)).col(0);
}

double logdet(const CholeskyFactor& factor) {
  return 2.0 * factor.lower().diagonal().array().log().sum();
}

Matrix expm(const Matrix& a) {
  require_square(a, "expm");
  const Eigen::Index n = a.rows();
  if (n == 0) return a;

  // Diagonal Pade(6,6) coefficients: c_k = (2p-k)! p! / ((2p)! k! (p-k)!).
  constexpr int p = 6;
  std::array<double, p + 1> c{};
  c[0] = 1.0;
  for (int k = 1; k <= p; ++k) c[k] = c[k - 1] * static_cast<double>(p - k + 1) /
                                      static_cast<double>(k * (2 * p - k + 1));

  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / 0.5))));
  const Matrix scaled = a / std::ldexp(1.0, squarings);

  const Matrix identity = Matrix::Identity(n, n);
  Matrix power = identity;
  Matrix even = c[0] * identity;
  Matrix odd = Matrix::Zero(n, n);
  for (int k = 1; k <= p; ++k) {
    power = power * scaled;
    if (k % 2 == 0) {
      even += c[k] * power;
    } else {
      odd += c[k] * power;
    }
  }
  Matrix result = (even - odd).partialPivLu().solve(even + odd);
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
  require_square(a, "solve_lyapunov");
  if (q.rows() != a.rows() || q.cols() != a.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "solve_lyapunov: Q does not match A");
  }
  const Eigen::Index n = a.rows();
  const Matrix identity = Matrix::Identity(n, n);
  Matrix system = Matrix::Zero(n * n, n * n);
  // vec(A·P) = (I ⊗ A) vec(P), vec(P·Aᵀ) = (A ⊗ I) vec(P), column-major vec.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      system.block(i * n, j * n, n, n) += identity(i, j) * a + a(i, j) * identity;
    }
  }
  const Matrix q_copy = q;
  const Vector rhs = -Eigen::Map<const Vector>(q_copy.data(), n * n);
  Vector vec_p = system.fullPivLu().solve(rhs);
  Matrix p = Eigen::Map<Matrix>(vec_p.data(), n, n);
  return symmetrize(p);
}

}  // namespace gpsysid
