#include "ovc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ovc {

Eigen::MatrixXd CholeskyFactor::solve(const Eigen::MatrixXd& B) const {
  Eigen::MatrixXd Y = L.triangularView<Eigen::Lower>().solve(B);
  return L.transpose().triangularView<Eigen::Upper>().solve(Y);
}

Eigen::MatrixXd CholeskyFactor::solve_lower(const Eigen::MatrixXd& B) const {
  return L.triangularView<Eigen::Lower>().solve(B);
}

Eigen::MatrixXd CholeskyFactor::solve_upper(const Eigen::MatrixXd& B) const {
  return L.transpose().triangularView<Eigen::Upper>().solve(B);
}

double CholeskyFactor::log_det() const {
  return 2.0 * L.diagonal().array().log().sum();
}

CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& A, int max_tries) {
  if (A.rows() != A.cols()) throw DimensionError("cholesky_with_jitter: matrix not square");
  const Eigen::Index n = A.rows();
  if (n == 0) return {Eigen::MatrixXd(0, 0), 0.0};
  const double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
  const double scale = A.cwiseAbs().maxCoeff();
  if (asym > 1e-8 * std::max(scale, 1.0)) {
    throw DimensionError("cholesky_with_jitter: input not symmetric");
  }
  static const double kLadder[] = {0.0, 1e-8, 1e-6, 1e-4, 1e-2};
  const int tries = std::min<int>(max_tries, 5);
  const double diag_mean = A.diagonal().mean();
  const Eigen::MatrixXd As = symmetrize(A);
  for (int t = 0; t < tries; ++t) {
    const double jitter = kLadder[t] * diag_mean;
    Eigen::MatrixXd Aj = As;
    Aj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(Aj);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite()) {
      return {llt.matrixL(), jitter};
    }
  }
  throw NumericalError("cholesky_with_jitter: matrix indefinite after jitter ladder");
}

PivotedFactor pivoted_cholesky(const Eigen::MatrixXd& A, int max_rank, double rel_tol) {
  if (A.rows() != A.cols()) throw DimensionError("pivoted_cholesky: matrix not square");
  const Eigen::Index n = A.rows();
  if (max_rank < 0 || max_rank > n) throw DimensionError("pivoted_cholesky: bad max_rank");

  const double total_trace = A.diagonal().sum();
  // Elimination roundoff scales with the largest diagonal processed, so the
  // breakdown test must tolerate that much; genuinely indefinite inputs sit
  // far below this floor.
  const double breakdown_floor =
      -1e-8 *
      std::max({total_trace, static_cast<double>(n) * A.diagonal().maxCoeff(), 1.0});

  Eigen::MatrixXd R = symmetrize(A);  // residual
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, max_rank);
  std::vector<int> pivots;
  pivots.reserve(max_rank);
  double resid = total_trace;

  // Diagonals at or below roundoff of the original scale are treated as
  // eliminated; their reduction ratio |col|^2 / d is pure noise.
  const double diag_floor = 1e-12 * std::max(total_trace / std::max<double>(n, 1), 0.0);

  for (int step = 0; step < max_rank; ++step) {
    if (resid <= rel_tol * total_trace || resid <= 0.0) break;
    // One-step trace reduction of candidate j is |R col j|^2 / R(j,j).
    int best = -1;
    double best_red = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = R(j, j);
      if (d < breakdown_floor) {
        throw NumericalError("pivoted_cholesky: residual diagonal broke down");
      }
      if (d <= diag_floor) continue;
      const double red = R.col(j).squaredNorm() / d;
      if (red > best_red) {
        best_red = red;
        best = static_cast<int>(j);
      }
    }
    if (best < 0) break;  // residual numerically zero
    const Eigen::VectorXd col = R.col(best) / std::sqrt(R(best, best));
    L.col(step) = col;
    R.noalias() -= col * col.transpose();
    R = symmetrize(R);
    pivots.push_back(best);
    resid = std::max(R.diagonal().sum(), 0.0);
  }
  L.conservativeResize(n, static_cast<Eigen::Index>(pivots.size()));
  return {std::move(pivots), std::move(L), resid};
}

Eigen::MatrixXd woodbury_inverse_update(const Eigen::MatrixXd& S, const Eigen::MatrixXd& U,
                                        const Eigen::MatrixXd& V_inner) {
  const Eigen::Index n = S.rows();
  if (S.cols() != n) throw DimensionError("woodbury_inverse_update: S must be square");
  if (U.rows() != n) throw DimensionError("woodbury_inverse_update: U row count mismatch");
  const Eigen::Index k = U.cols();
  if (V_inner.rows() != k || V_inner.cols() != k) {
    throw DimensionError("woodbury_inverse_update: V_inner must be k x k");
  }
  if (k == 0 || U.cwiseAbs().maxCoeff() == 0.0) return S;

  // (A + U V U^T)^{-1} = S (I + W V W^T)^{-1} S^T with W = S^T U, and
  // (I + B B^T)^{-1/2} = I + B g(B^T B) B^T, g(l) = ((1+l)^{-1/2} - 1)/l.
  const Eigen::MatrixXd W = S.transpose() * U;
  const Eigen::MatrixXd B = W * psd_sqrt(V_inner);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(B.transpose() * B));
  if (eig.info() != Eigen::Success) {
    throw NumericalError("woodbury_inverse_update: inner eigen decomposition failed");
  }
  Eigen::VectorXd g(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double l = std::max(eig.eigenvalues()[i], 0.0);
    g[i] = l > 1e-14 ? (1.0 / std::sqrt(1.0 + l) - 1.0) / l : -0.5;
  }
  const Eigen::MatrixXd inner =
      eig.eigenvectors() * g.asDiagonal() * eig.eigenvectors().transpose();
  Eigen::MatrixXd R = S;
  R.noalias() += (S * B) * (inner * B.transpose());
  if (!R.allFinite()) throw NumericalError("woodbury_inverse_update: ill-conditioned update");
  return R;
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& M) {
  return 0.5 * (M + M.transpose());
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& A, double tol_scale) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(A));
  if (eig.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigen decomposition failed");
  const double floor = -tol_scale * std::max(A.diagonal().sum(), 1.0);
  Eigen::VectorXd d = eig.eigenvalues();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d[i] < floor) throw NumericalError("psd_sqrt: matrix is not PSD");
    d[i] = std::sqrt(std::max(d[i], 0.0));
  }
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd psd_inv_sqrt(const Eigen::MatrixXd& A, double tol_scale) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(A));
  if (eig.info() != Eigen::Success) {
    throw NumericalError("psd_inv_sqrt: eigen decomposition failed");
  }
  const double trace = std::max(A.diagonal().sum(), 1.0);
  const double floor = -tol_scale * trace;
  const double cutoff = 1e-14 * trace;
  Eigen::VectorXd d = eig.eigenvalues();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d[i] < floor) throw NumericalError("psd_inv_sqrt: matrix is not PSD");
    d[i] = d[i] > cutoff ? 1.0 / std::sqrt(d[i]) : 0.0;
  }
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

double symmetric_condition_number(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(A));
  const Eigen::VectorXd d = eig.eigenvalues().cwiseAbs();
  const double lo = d.minCoeff();
  const double hi = d.maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

}  // namespace ovc
