#pragma once

#include <Eigen/Dense>
#include <utility>

#include "ovc/exact_gp.hpp"
#include "ovc/kernel.hpp"
#include "ovc/likelihood.hpp"
#include "ovc/noise.hpp"

namespace ovc {

/// Inducing point locations. Rows must be distinct (duplicates would make
/// K_uu numerically singular).
class InducingSet {
public:
  explicit InducingSet(const Eigen::MatrixXd& Z);
  const Eigen::MatrixXd& Z() const { return Z_; }
  int size() const { return static_cast<int>(Z_.rows()); }
  int dim() const { return static_cast<int>(Z_.cols()); }

private:
  Eigen::MatrixXd Z_;
};

/// Data-sufficient-statistic parameterization of the sparse posterior:
/// c = K_uv Sigma^{-1} (y - mean), C = K_uv Sigma^{-1} K_vu. Additive across
/// observation blocks for fixed Z and hyperparameters.
struct CanonicalState {
  InducingSet Z;
  KernelHyperparams params;
  Eigen::VectorXd c;
  Eigen::MatrixXd C;
};

/// Whitened variational state: m_bar = L^{-1} m_u and
/// S_bar = L^{-1} S_u L^{-T} for K_uu = L L^T.
struct VariationalState {
  InducingSet Z;
  KernelHyperparams params;
  Eigen::VectorXd m_bar;
  Eigen::MatrixXd S_bar;

  int num_inducing() const { return Z.size(); }
};

CanonicalState canonical_from_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const NoiseModel& noise, const InducingSet& Z,
                                   const KernelHyperparams& params);

/// Elementwise sum of two canonical states over the same Z and params.
CanonicalState canonical_add(const CanonicalState& a, const CanonicalState& b);

/// Closed-form optimal variational distribution for the canonical state:
/// m_u = K (K + C)^{-1} c, S_u = K (K + C)^{-1} K, stored whitened.
VariationalState canonical_to_variational(const CanonicalState& state);

/// Inverts the closed form. Requires S_u strictly below the prior,
/// i.e. all whitened eigenvalues below one; states at or above the prior
/// are rejected.
CanonicalState variational_to_canonical(const VariationalState& state);

PosteriorGaussian sgpr_predict(const VariationalState& state, const Eigen::MatrixXd& X_test,
                               bool full_cov = true);
PosteriorGaussian sgpr_predict(const CanonicalState& state, const Eigen::MatrixXd& X_test,
                               bool full_cov = true);

/// Collapsed sparse-regression bound: log N(y | 0, Sigma + Q_vv) minus the
/// scaled Nystrom slack 0.5 tr(Sigma^{-1}(K_vv - Q_vv)).
double sgpr_collapsed_elbo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const NoiseModel& noise, const InducingSet& Z,
                           const KernelHyperparams& params);

/// Uncollapsed bound: sum_i E_{q(f_i)} log p(y_i | f_i) - KL(phi(u) || p(u)).
/// Non-Gaussian expectations use 20-node Gauss-Hermite quadrature; the KL is
/// evaluated in whitened coordinates.
double svgp_elbo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LikelihoodSpec& lik,
                 const VariationalState& state);

/// Top-p pivots of the noise-scaled kernel Sigma^{-1/2} K Sigma^{-1/2} over
/// the candidate rows.
InducingSet select_inducing(const Eigen::MatrixXd& X_cand, const NoiseModel& noise,
                            const KernelHyperparams& params, int p);

/// The two regularization traces of the streaming collapsed bound
/// (batch-fit slack, old-state reconstruction slack). Diagnostic only.
std::pair<double, double> osgpr_trace_terms(const VariationalState& prev,
                                            const InducingSet& new_Z,
                                            const KernelHyperparams& new_params,
                                            const Eigen::MatrixXd& X_batch, double sigma2);

struct SparseFit {
  InducingSet Z;
  KernelHyperparams params;
  VariationalState state;
};

/// Trains (Z, theta) by finite-difference Adam ascent of the collapsed bound
/// plus hyperpriors; the variational state is kept at its closed-form optimum.
/// Non-Gaussian likelihoods alternate Laplace-surrogate refreshes with
/// collapsed-bound steps over the surrogate targets.
SparseFit train_sparse(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const LikelihoodSpec& lik, const InducingSet& Z_init,
                       const KernelHyperparams& params_init, int steps, double lr = 0.1,
                       bool optimize_inducing = true);

/// Collapsed bound plus the Gamma hyperprior terms (the train_sparse objective
/// for a Gaussian likelihood).
double sparse_train_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const NoiseModel& noise, const InducingSet& Z,
                              const KernelHyperparams& params);

}  // namespace ovc
