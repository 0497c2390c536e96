#pragma once

#include <Eigen/Dense>
#include <utility>

#include "ovc/kernel.hpp"
#include "ovc/noise.hpp"

namespace ovc {

/// Observation likelihood. Poisson uses a log link; Bernoulli and Binomial use
/// a logit link. Binomial carries per-observation trial counts.
class LikelihoodSpec {
public:
  enum class Family { Gaussian, Poisson, Bernoulli, Binomial };

  static LikelihoodSpec gaussian(double sigma2);
  static LikelihoodSpec poisson();
  static LikelihoodSpec bernoulli();
  static LikelihoodSpec binomial(const Eigen::VectorXi& trials);

  Family family() const { return family_; }
  bool is_gaussian() const { return family_ == Family::Gaussian; }
  double sigma2() const;
  const Eigen::VectorXi& trials() const { return trials_; }

  /// Likelihood restricted to a contiguous observation range (Binomial slices
  /// its trial counts).
  LikelihoodSpec slice(int offset, int count) const;

  /// Throws if y lies outside the family's support.
  void validate_support(const Eigen::VectorXd& y) const;

private:
  LikelihoodSpec(Family family, double sigma2, Eigen::VectorXi trials)
      : family_(family), sigma2_(sigma2), trials_(std::move(trials)) {}

  Family family_;
  double sigma2_ = 0.0;
  Eigen::VectorXi trials_;
};

struct LogLikEval {
  double logp;                 // sum over observations
  Eigen::VectorXd grad;        // d logp / df
  Eigen::VectorXd hess_diag;   // diagonal of d^2 logp / df^2 (negative)
};

/// Analytic log-likelihood, gradient, and Hessian diagonal at latent values f.
LogLikEval loglik_grad_hess(const LikelihoodSpec& lik, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& f);

struct LaplaceSurrogate {
  Eigen::VectorXd f_star;   // mode of logp(y|f) - 0.5 f^T K^{-1} f
  Eigen::VectorXd w_diag;   // -hessian diagonal at the mode (positive)
  int iterations = 0;
  bool converged = false;
};

/// Newton iteration for the latent mode under prior covariance K, with step
/// halving whenever a full step would decrease the objective. Convergence is
/// max elementwise change below tol.
LaplaceSurrogate newton_map(const Eigen::MatrixXd& K, const Eigen::VectorXd& y,
                            const LikelihoodSpec& lik, double tol = 1e-6, int max_iter = 50);

/// Gaussian replacement of a non-Gaussian batch: targets f* and diagonal
/// noise 1/W evaluated at the mode of the prior-covariance MAP problem at
/// X_batch. Also applies to Gaussian batches (the targets are then the
/// one-step smoothed values, not the raw ys).
std::pair<Eigen::VectorXd, NoiseModel> laplace_surrogate_batch(const KernelHyperparams& prior,
                                                               const Eigen::MatrixXd& X_batch,
                                                               const Eigen::VectorXd& y,
                                                               const LikelihoodSpec& lik);

/// E_{N(mu, var)}[log p(y | f)] per observation; analytic for Gaussian,
/// 20-node Gauss-Hermite otherwise.
double expected_log_lik(const LikelihoodSpec& lik, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& mu, const Eigen::VectorXd& var);

}  // namespace ovc
