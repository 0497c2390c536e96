#pragma once

#include <Eigen/Dense>

#include "ovc/errors.hpp"

namespace ovc {

/// Hyperparameters of a constant-mean GP with a scaled ARD Matern-5/2 kernel
/// and homoskedastic observation noise.
///
/// Positive parameters (lengthscales, outputscale, noise variance) are stored
/// in the log domain so optimizers can work unconstrained; accessors return
/// the natural-domain values.
class KernelHyperparams {
public:
  KernelHyperparams(const Eigen::VectorXd& lengthscales, double outputscale,
                    double mean_const, double noise_variance);

  /// Unit lengthscales and outputscale, zero mean, noise 1e-2.
  static KernelHyperparams defaults(int input_dim);

  int input_dim() const { return static_cast<int>(log_lengthscales_.size()); }
  Eigen::VectorXd lengthscales() const { return log_lengthscales_.array().exp(); }
  double outputscale() const { return std::exp(log_outputscale_); }
  double mean_const() const { return mean_const_; }
  double noise_variance() const { return std::exp(log_noise_); }

  KernelHyperparams with_noise_variance(double noise_variance) const;
  KernelHyperparams with_mean_const(double mean_const) const;

  /// Packing for unconstrained optimization: [log ls (d), log os, mean, log noise].
  Eigen::VectorXd to_unconstrained() const;
  static KernelHyperparams from_unconstrained(const Eigen::VectorXd& v, int input_dim);
  static int unconstrained_size(int input_dim) { return input_dim + 3; }

private:
  Eigen::VectorXd log_lengthscales_;
  double log_outputscale_;
  double mean_const_;
  double log_noise_;
};

/// Cross-covariance matrix k(X, X2) of the scaled ARD Matern-5/2 kernel:
/// s * (1 + sqrt(5) r + 5 r^2 / 3) exp(-sqrt(5) r) with r the lengthscale-scaled
/// Euclidean distance. X is n x d, X2 is m x d; result is n x m.
Eigen::MatrixXd matern52_ard(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2,
                             const KernelHyperparams& params);

/// Diagonal of k(X, X) (constant: the outputscale).
Eigen::VectorXd matern52_diag(const Eigen::MatrixXd& X, const KernelHyperparams& params);

}  // namespace ovc
