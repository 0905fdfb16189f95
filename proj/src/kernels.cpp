#include "gpsysid/kernels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "gpsysid/error.hpp"

namespace gpsysid {

namespace {

const double kSqrt3 = std::sqrt(3.0);
const double kSqrt5 = std::sqrt(5.0);

void require_same_dim(const Matrix& za, const Matrix& zb) {
  if (za.cols() != zb.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "kernel inputs have dimensions " +
                                                  std::to_string(za.cols()) + " and " +
                                                  std::to_string(zb.cols()));
  }
}

Matrix distances(const Matrix& za, const Matrix& zb) {
  Matrix r(za.rows(), zb.rows());
  for (Eigen::Index i = 0; i < za.rows(); ++i) {
    for (Eigen::Index j = 0; j < zb.rows(); ++j) r(i, j) = (za.row(i) - zb.row(j)).norm();
  }
  return r;
}

// ∂k/∂log ℓ as a function of distance.
double dlog_lengthscale(const Kernel& kernel, double r) {
  const double s2 = kernel.variance();
  const double u = r / kernel.lengthscale;
  switch (kernel.family) {
    case KernelFamily::SquaredExponential:
      return s2 * std::exp(-0.5 * u * u) * u * u;
    case KernelFamily::Matern12:
      return s2 * std::exp(-u) * u;
    case KernelFamily::Matern32: {
      const double a = kSqrt3 * u;
      return s2 * a * a * std::exp(-a);
    }
    case KernelFamily::Matern52: {
      const double a = kSqrt5 * u;
      return s2 * a * a * (1.0 + a) / 3.0 * std::exp(-a);
    }
  }
  return 0.0;
}

}  // namespace

std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::SquaredExponential: return "se";
    case KernelFamily::Matern12: return "matern12";
    case KernelFamily::Matern32: return "matern32";
    case KernelFamily::Matern52: return "matern52";
  }
  return "unknown";
}

std::optional<KernelFamily> parse_kernel_family(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "se" || lower == "squared_exponential") return KernelFamily::SquaredExponential;
  if (lower == "matern12") return KernelFamily::Matern12;
  if (lower == "matern32") return KernelFamily::Matern32;
  if (lower == "matern52") return KernelFamily::Matern52;
  return std::nullopt;
}

bool is_matern(KernelFamily family) { return family != KernelFamily::SquaredExponential; }

void Kernel::validate() const {
  if (!(std::isfinite(magnitude) && magnitude > 0.0 && std::isfinite(lengthscale) &&
        lengthscale > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "kernel magnitude and lengthscale must be positive");
  }
}

HyperVector HyperVector::from(const Kernel& kernel, double noise_variance) {
  return {{std::log(kernel.magnitude), std::log(kernel.lengthscale), 0.5 * std::log(noise_variance)}};
}

Kernel HyperVector::kernel(KernelFamily family) const {
  return Kernel{family, std::exp(values[0]), std::exp(values[1])};
}

double HyperVector::noise_variance() const { return std::exp(2.0 * values[2]); }

double eval_distance(const Kernel& kernel, double r) {
  const double s2 = kernel.variance();
  const double u = r / kernel.lengthscale;
  switch (kernel.family) {
    case KernelFamily::SquaredExponential:
      return s2 * std::exp(-0.5 * u * u);
    case KernelFamily::Matern12:
      return s2 * std::exp(-u);
    case KernelFamily::Matern32: {
      const double a = kSqrt3 * u;
      return s2 * (1.0 + a) * std::exp(-a);
    }
    case KernelFamily::Matern52: {
      const double a = kSqrt5 * u;
      return s2 * (1.0 + a + a * a / 3.0) * std::exp(-a);
    }
  }
  return 0.0;
}

double eval(const Kernel& kernel, const Eigen::Ref<const Vector>& z,
            const Eigen::Ref<const Vector>& z_prime) {
  if (z.size() != z_prime.size()) {
    throw Error(ErrorCode::DimensionMismatch, "kernel inputs have dimensions " +
                                                  std::to_string(z.size()) + " and " +
                                                  std::to_string(z_prime.size()));
  }
  return eval_distance(kernel, (z - z_prime).norm());
}

Matrix gram(const Kernel& kernel, const Matrix& za, const Matrix& zb) {
  require_same_dim(za, zb);
  return distances(za, zb).unaryExpr([&](double r) { return eval_distance(kernel, r); });
}

Matrix gram(const Kernel& kernel, const Matrix& z) {
  const Eigen::Index n = z.rows();
  Matrix k(n, n);
  const double s2 = kernel.variance();
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = s2;
    for (Eigen::Index j = 0; j < i; ++j) {
      k(i, j) = eval_distance(kernel, (z.row(i) - z.row(j)).norm());
      k(j, i) = k(i, j);
    }
  }
  return k;
}

std::array<Matrix, 2> grad_log_hyper(const Kernel& kernel, const Matrix& za, const Matrix& zb) {
  require_same_dim(za, zb);
  const Matrix r = distances(za, zb);
  Matrix d_magnitude = 2.0 * r.unaryExpr([&](double d) { return eval_distance(kernel, d); });
  Matrix d_lengthscale = r.unaryExpr([&](double d) { return dlog_lengthscale(kernel, d); });
  return {std::move(d_magnitude), std::move(d_lengthscale)};
}

}  // namespace gpsysid
