#pragma once

#include <Eigen/Dense>

#include "ovc/kernel.hpp"
#include "ovc/linalg.hpp"
#include "ovc/noise.hpp"

namespace ovc {

/// Gaussian predictive distribution at k query points. `mean` carries one
/// column per batch element (fantasy ensembles share query locations and
/// covariance, so `covariance`/`variance` are common across columns).
struct PosteriorGaussian {
  Eigen::MatrixXd mean;        // k x B
  Eigen::MatrixXd covariance;  // k x k; empty in variance-only mode
  Eigen::VectorXd variance;    // k, diagonal clamped at zero

  Eigen::VectorXd mean_col(int b = 0) const { return mean.col(b); }
};

/// Exact GP regression model with heteroskedastic block-diagonal noise and
/// cached solves: cache_A = (K + Sigma)^{-1} (Y - mean) and
/// cache_R cache_R^T = (K + Sigma)^{-1}. An optional leading batch axis is
/// carried as extra columns of Y (shared X and noise).
struct ExactGpModel {
  Eigen::MatrixXd X;        // n x d
  Eigen::MatrixXd Y;        // n x B
  NoiseModel noise;
  KernelHyperparams params;

  Eigen::MatrixXd cache_A;  // n x B
  Eigen::MatrixXd cache_L;  // lower Cholesky of K + Sigma
  Eigen::MatrixXd cache_R;  // L^{-T}; R R^T = (K + Sigma)^{-1}
  double jitter_used = 0.0;

  int train_size() const { return static_cast<int>(X.rows()); }
  int batch_size() const { return static_cast<int>(Y.cols()); }
};

/// Builds the predictive caches for (X, Y) under the given noise model.
ExactGpModel fit_exact(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                       const NoiseModel& noise, const KernelHyperparams& params);

/// Predictive posterior at X_test. With full_cov=false only the variance
/// vector is produced.
PosteriorGaussian predict(const ExactGpModel& model, const Eigen::MatrixXd& X_test,
                          bool full_cov = true);

/// Exact marginal log-likelihood of (X, y); y is centered by the constant mean.
double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const NoiseModel& noise, const KernelHyperparams& params);

/// Conditions the model on a new batch through a block Cholesky update; cost
/// is O(n^2 m) in the batch size m instead of a refit. Y_new must match the
/// model's batch width.
ExactGpModel condition_exact(const ExactGpModel& model, const Eigen::MatrixXd& X_new,
                             const Eigen::MatrixXd& Y_new, const NoiseModel& noise_new);

/// Marginal likelihood plus the Gamma hyperprior terms used when fitting.
double exact_train_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const KernelHyperparams& params);

/// Adam ascent of the hyperprior-regularized marginal likelihood over
/// log-domain parameters (gradients by central finite differences). The noise
/// variance is taken from (and returned in) the hyperparameters themselves.
KernelHyperparams train_hypers_exact(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     const KernelHyperparams& init, int steps, double lr = 0.1);

/// log Gamma(shape, rate) density at x, used for hyperpriors.
double gamma_log_pdf(double x, double shape, double rate);

}  // namespace ovc
