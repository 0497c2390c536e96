#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace ovc {

/// Standard-normal inverse CDF (Acklam's rational approximation plus one
/// Halley refinement; absolute error well below 1e-12 on (0,1)).
double norm_inv_cdf(double p);

/// Standard-normal CDF.
double norm_cdf(double x);

/// Standard-normal pdf.
double norm_pdf(double x);

/// Deterministic RNG wrapper. All transforms (uniform, normal, Poisson) are
/// implemented on top of the fully specified mt19937_64 bit stream, so a seed
/// reproduces identical draws on every platform.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via inverse CDF.
  double normal() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return norm_inv_cdf(u);
  }

  /// Poisson draw by Knuth's product-of-uniforms method (rates at desk scale).
  int poisson(double rate);

  /// Integer in [0, n).
  int below(int n) { return static_cast<int>(uniform() * n) % n; }

  /// Derive an independent substream keyed by a tag.
  Rng spawn(std::uint64_t tag);

private:
  std::mt19937_64 eng_;
};

/// Scrambled Halton sequence over [0,1)^d: a deterministic low-discrepancy
/// generator with seed-keyed digit permutations per dimension.
class HaltonSampler {
public:
  HaltonSampler(int dim, std::uint64_t seed);

  /// Next n points, n x d.
  Eigen::MatrixXd next(int n);

  /// Points mapped into a box given per-dimension lower/upper bounds.
  Eigen::MatrixXd next_in_box(int n, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

private:
  double sample_coord(int dim_index, std::uint64_t index) const;

  int dim_;
  std::uint64_t index_ = 0;
  std::vector<int> bases_;
  std::vector<std::vector<int>> perms_;  // per dimension: digit permutation (0 fixed at 0)
};

/// Nodes and weights of n-point Gauss-Hermite quadrature (weight e^{-x^2}),
/// computed by the Golub-Welsch eigenvalue method.
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int n);

}  // namespace ovc
