#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <utility>

#include "ovc/exact_gp.hpp"
#include "ovc/sparse_gp.hpp"

namespace ovc {

/// The unique size-p dataset with Gaussian pseudo-likelihood that reproduces a
/// variational state at its own inducing locations: targets y_hat on the
/// observation scale (constant mean included) and pseudo-noise Sigma_yhat.
struct PseudoDataset {
  Eigen::MatrixXd Z_prev;      // p x d
  Eigen::VectorXd y_hat;       // p
  Eigen::MatrixXd Sigma_yhat;  // p x p PSD

  /// Largest pseudo-noise variance; diverges for barely informed states.
  double max_noise() const { return Sigma_yhat.diagonal().maxCoeff(); }
};

/// Exact GP over [Z_prev; X_batch] with block-diagonal likelihood covariance
/// blkdiag(Sigma_yhat, Sigma_y). Extra Y columns form a Monte Carlo fantasy
/// ensemble sharing locations and noise.
struct FantasyModel {
  ExactGpModel gp;
  int num_pseudo = 0;  // leading rows of gp.X coming from pseudo-data

  /// Condition number of the training covariance K + Sigma (stability
  /// diagnostic for rollouts).
  double train_cov_condition() const;
};

/// Converts a variational state into its pseudo-data representation using the
/// whitened squared-system expressions; (K - S)-style differences are never
/// inverted directly.
PseudoDataset to_pseudo_data(const VariationalState& state);

/// Conditions the state on a new batch by building an exact GP over the
/// pseudo-data plus the batch. Y_batch may carry fantasy columns. An empty
/// batch yields the pseudo-data-only model.
FantasyModel ovc_condition(const VariationalState& state, const Eigen::MatrixXd& X_batch,
                           const Eigen::MatrixXd& Y_batch, const NoiseModel& noise_batch);

/// Streaming update of the canonical parameterization onto new inducing
/// locations and hyperparameters: the old state enters through the projection
/// onto its own inducing block.
CanonicalState stream_update(const CanonicalState& prev, const Eigen::MatrixXd& X_batch,
                             const Eigen::VectorXd& y_batch, const NoiseModel& noise_batch,
                             const InducingSet& new_Z, const KernelHyperparams& new_params);

/// Pivoted-Cholesky reselection over [X_batch; Z_old] under the scaled kernel
/// with blkdiag(noise_batch, Sigma_yhat).
InducingSet reselect_inducing_online(const VariationalState& state,
                                     const Eigen::MatrixXd& X_batch,
                                     const NoiseModel& noise_batch, int p);

struct StreamDiagnostics {
  double residual_trace = 0.0;   // pivoted-Cholesky slack at reselection
  double trace1 = 0.0;           // batch Nystrom slack (scaled)
  double trace2 = 0.0;           // old-state reconstruction slack
  double pseudo_noise_max = 0.0;
};

/// One full online step: reselect inducing points, stream-update the
/// canonical state, and return the new closed-form variational state.
/// Passing forced_Z skips the pivoted reselection and uses the given
/// locations instead (fixed-inducing streams, resampling baselines).
std::pair<VariationalState, StreamDiagnostics> stream_step(
    const VariationalState& state, const Eigen::MatrixXd& X_batch,
    const Eigen::VectorXd& y_batch, const NoiseModel& noise_batch, int p,
    const InducingSet* forced_Z = nullptr);

/// Compressed model snapshot (theta, Z', y_hat, Sigma_yhat); the text form
/// round-trips bit-exactly at 17 significant digits.
struct StateSnapshot {
  KernelHyperparams params;
  PseudoDataset pseudo;
};

StateSnapshot snapshot_state(const VariationalState& state);
void save_snapshot(std::ostream& os, const StateSnapshot& snap);
StateSnapshot load_snapshot(std::istream& is);

/// Rebuilds the variational state a snapshot encodes.
VariationalState state_from_snapshot(const StateSnapshot& snap);

}  // namespace ovc
