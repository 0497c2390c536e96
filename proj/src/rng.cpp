#include "ovc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ovc/errors.hpp"

namespace ovc {

namespace {

// Acklam's inverse normal CDF coefficients.
constexpr double kA[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                         1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
constexpr double kB[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                         6.680131188771972e+01, -1.328068155288572e+01};
constexpr double kC[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                         -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
constexpr double kD[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                         3.754408661907416e+00};

double acklam(double p) {
  const double plow = 0.02425;
  double q, r, x;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q + kC[5]) /
        ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    q = p - 0.5;
    r = q * q;
    x = (((((kA[0] * r + kA[1]) * r + kA[2]) * r + kA[3]) * r + kA[4]) * r + kA[5]) * q /
        (((((kB[0] * r + kB[1]) * r + kB[2]) * r + kB[3]) * r + kB[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q + kC[5]) /
        ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  }
  return x;
}

constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53,
                           59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double norm_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw NumericalError("norm_inv_cdf: p outside (0,1)");
  }
  double x = acklam(p);
  // One Halley refinement against erfc.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

int Rng::poisson(double rate) {
  if (rate < 0.0) throw NumericalError("poisson: negative rate");
  if (rate == 0.0) return 0;
  if (rate > 64.0) {
    // Split large rates so the product of uniforms never underflows.
    const int half = poisson(rate / 2.0);
    return half + poisson(rate - rate / 2.0);
  }
  const double limit = std::exp(-rate);
  int k = 0;
  double prod = uniform();
  while (prod > limit) {
    ++k;
    prod *= uniform();
  }
  return k;
}

Rng Rng::spawn(std::uint64_t tag) {
  const std::uint64_t s = splitmix64(eng_() ^ splitmix64(tag));
  return Rng(s);
}

HaltonSampler::HaltonSampler(int dim, std::uint64_t seed) : dim_(dim) {
  if (dim <= 0 || dim > static_cast<int>(sizeof(kPrimes) / sizeof(int))) {
    throw DimensionError("HaltonSampler: unsupported dimension");
  }
  Rng rng(splitmix64(seed ^ 0x9e3779b97f4a7c15ULL));
  bases_.resize(dim);
  perms_.resize(dim);
  for (int j = 0; j < dim; ++j) {
    const int b = kPrimes[j];
    bases_[j] = b;
    std::vector<int> perm(b);
    for (int i = 0; i < b; ++i) perm[i] = i;
    // Scramble nonzero digits; digit 0 stays fixed so 0 never maps to itself
    // repeatedly at every level (keeps the sequence inside (0,1)).
    for (int i = b - 1; i >= 2; --i) {
      std::swap(perm[i], perm[1 + rng.below(i)]);
    }
    perms_[j] = std::move(perm);
  }
  index_ = 16;  // skip the earliest, most structured points
}

double HaltonSampler::sample_coord(int j, std::uint64_t n) const {
  const int b = bases_[j];
  const std::vector<int>& perm = perms_[j];
  double x = 0.0;
  double f = 1.0 / b;
  while (n > 0) {
    x += f * perm[n % b];
    n /= b;
    f /= b;
  }
  return x;
}

Eigen::MatrixXd HaltonSampler::next(int n) {
  Eigen::MatrixXd out(n, dim_);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim_; ++j) out(i, j) = sample_coord(j, index_ + i);
  }
  index_ += n;
  return out;
}

Eigen::MatrixXd HaltonSampler::next_in_box(int n, const Eigen::VectorXd& lower,
                                           const Eigen::VectorXd& upper) {
  if (lower.size() != dim_ || upper.size() != dim_) {
    throw DimensionError("HaltonSampler: bounds dimension mismatch");
  }
  Eigen::MatrixXd U = next(n);
  for (int j = 0; j < dim_; ++j) {
    U.col(j) = (lower[j] + (upper[j] - lower[j]) * U.col(j).array()).matrix();
  }
  return U;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int n) {
  if (n < 1) throw DimensionError("gauss_hermite: need at least one node");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(i / 2.0);
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
  Eigen::VectorXd nodes = eig.eigenvalues();
  Eigen::VectorXd weights(n);
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  for (int i = 0; i < n; ++i) {
    const double v0 = eig.eigenvectors()(0, i);
    weights[i] = sqrt_pi * v0 * v0;
  }
  return {std::move(nodes), std::move(weights)};
}

}  // namespace ovc
