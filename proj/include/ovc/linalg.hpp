#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ovc/errors.hpp"

namespace ovc {

/// Lower-triangular Cholesky factor of a (possibly jittered) SPD matrix.
struct CholeskyFactor {
  Eigen::MatrixXd L;
  double jitter_used = 0.0;

  /// (L L^T)^{-1} B via two triangular solves.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
  /// L^{-1} B.
  Eigen::MatrixXd solve_lower(const Eigen::MatrixXd& B) const;
  /// L^{-T} B.
  Eigen::MatrixXd solve_upper(const Eigen::MatrixXd& B) const;
  double log_det() const;  // of L L^T
};

/// Cholesky factorization with an escalating diagonal jitter ladder
/// {0, 1e-8, 1e-6, 1e-4, 1e-2} * mean(diag A). Throws NumericalError once the
/// ladder is exhausted (indefinite input).
CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& A, int max_tries = 5);

/// Rank-k pivoted Cholesky factor of a PSD matrix. Rows of L are kept in the
/// original ordering, so A ~ L L^T directly.
struct PivotedFactor {
  std::vector<int> pivots;     // selection order
  Eigen::MatrixXd L;           // n x k
  double residual_trace = 0.0; // trace(A - L L^T)
};

/// Greedy low-rank pivoted Cholesky. Each pivot is chosen to maximize the
/// one-step reduction of the residual trace, |col_j|^2 / d_j, with ties broken
/// by the lowest index. Stops at max_rank or once
/// residual_trace <= rel_tol * trace(A).
PivotedFactor pivoted_cholesky(const Eigen::MatrixXd& A, int max_rank, double rel_tol = 0.0);

/// Given S with S S^T = A^{-1} and a PSD V_inner, returns R with
/// R R^T = (A + U V_inner U^T)^{-1}. Cost is O(n^2 k + k^3) for U of width k.
Eigen::MatrixXd woodbury_inverse_update(const Eigen::MatrixXd& S, const Eigen::MatrixXd& U,
                                        const Eigen::MatrixXd& V_inner);

/// 0.5 * (M + M^T).
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& M);

/// Symmetric PSD square root via eigendecomposition; eigenvalues below zero
/// are clamped (throws if one falls below -tol_scale * trace).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& A, double tol_scale = 1e-8);

/// Symmetric inverse square root, pseudo-inverting eigenvalues <= cutoff.
Eigen::MatrixXd psd_inv_sqrt(const Eigen::MatrixXd& A, double tol_scale = 1e-8);

/// 2-norm condition number of a symmetric matrix.
double symmetric_condition_number(const Eigen::MatrixXd& A);

}  // namespace ovc
