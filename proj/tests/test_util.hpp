#pragma once

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "gpsysid/numerics.hpp"

namespace gpsysid::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                            double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

/// Well-conditioned SPD matrix: B·Bᵀ + n·I.
inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index n) {
  const Matrix b = random_matrix(rng, n, n);
  return b * b.transpose() + static_cast<double>(n) * Matrix::Identity(n, n);
}

/// SPD matrix with prescribed condition number (orthogonal similarity of a
/// log-spaced spectrum).
inline Matrix spd_with_condition(std::mt19937_64& rng, Eigen::Index n, double cond) {
  const Matrix q = random_matrix(rng, n, n).householderQr().householderQ();
  Vector eig(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    eig[i] = std::pow(cond, -t);
  }
  return symmetrize(q * eig.asDiagonal() * q.transpose());
}

/// Sum of log-eigenvalues from a dense symmetric eigensolver.
inline double logdet_by_eigenvalues(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().array().log().sum();
}

/// Truncated Taylor series for the matrix exponential, summed until terms
/// stop contributing; squaring keeps the series short for larger norms.
inline Matrix expm_taylor(const Matrix& a) {
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = norm > 1.0 ? static_cast<int>(std::ceil(std::log2(norm))) : 0;
  const Matrix scaled = a / std::ldexp(1.0, squarings);
  Matrix sum = Matrix::Identity(a.rows(), a.cols());
  Matrix term = sum;
  for (int k = 1; k < 60; ++k) {
    term = term * scaled / static_cast<double>(k);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18 * sum.cwiseAbs().maxCoeff()) break;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace gpsysid::testing
