#include "ovc/kernel.hpp"

#include <cmath>

namespace ovc {

namespace {

void check_positive_finite(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DimensionError(std::string(name) + " must be strictly positive and finite");
  }
}

}  // namespace

KernelHyperparams::KernelHyperparams(const Eigen::VectorXd& lengthscales, double outputscale,
                                     double mean_const, double noise_variance) {
  if (lengthscales.size() == 0) throw DimensionError("at least one lengthscale required");
  for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
    check_positive_finite(lengthscales[i], "lengthscale");
  }
  check_positive_finite(outputscale, "outputscale");
  check_positive_finite(noise_variance, "noise_variance");
  if (!std::isfinite(mean_const)) throw DimensionError("mean_const must be finite");
  log_lengthscales_ = lengthscales.array().log();
  log_outputscale_ = std::log(outputscale);
  mean_const_ = mean_const;
  log_noise_ = std::log(noise_variance);
}

KernelHyperparams KernelHyperparams::defaults(int input_dim) {
  return KernelHyperparams(Eigen::VectorXd::Ones(input_dim), 1.0, 0.0, 1e-2);
}

KernelHyperparams KernelHyperparams::with_noise_variance(double noise_variance) const {
  KernelHyperparams out = *this;
  check_positive_finite(noise_variance, "noise_variance");
  out.log_noise_ = std::log(noise_variance);
  return out;
}

KernelHyperparams KernelHyperparams::with_mean_const(double mean_const) const {
  KernelHyperparams out = *this;
  if (!std::isfinite(mean_const)) throw DimensionError("mean_const must be finite");
  out.mean_const_ = mean_const;
  return out;
}

Eigen::VectorXd KernelHyperparams::to_unconstrained() const {
  Eigen::VectorXd v(log_lengthscales_.size() + 3);
  v.head(log_lengthscales_.size()) = log_lengthscales_;
  v[log_lengthscales_.size()] = log_outputscale_;
  v[log_lengthscales_.size() + 1] = mean_const_;
  v[log_lengthscales_.size() + 2] = log_noise_;
  return v;
}

KernelHyperparams KernelHyperparams::from_unconstrained(const Eigen::VectorXd& v, int input_dim) {
  if (v.size() != input_dim + 3) throw DimensionError("unconstrained vector has wrong size");
  KernelHyperparams out = defaults(input_dim);
  out.log_lengthscales_ = v.head(input_dim);
  out.log_outputscale_ = v[input_dim];
  out.mean_const_ = v[input_dim + 1];
  out.log_noise_ = v[input_dim + 2];
  return out;
}

Eigen::MatrixXd matern52_ard(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2,
                             const KernelHyperparams& params) {
  const int d = params.input_dim();
  if (X.cols() != d || X2.cols() != d) {
    throw DimensionError("kernel input dimension does not match lengthscale count");
  }
  if (!X.allFinite() || !X2.allFinite()) {
    throw NumericalError("non-finite kernel inputs");
  }
  const Eigen::VectorXd inv_ls = params.lengthscales().cwiseInverse();
  const Eigen::MatrixXd A = X * inv_ls.asDiagonal();
  const Eigen::MatrixXd B = X2 * inv_ls.asDiagonal();
  const Eigen::VectorXd a2 = A.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = B.rowwise().squaredNorm();
  // r^2 = |a|^2 + |b|^2 - 2<a,b>, clamped at zero before the square root.
  Eigen::MatrixXd r2 = (-2.0 * A * B.transpose());
  r2.colwise() += a2;
  r2.rowwise() += b2.transpose();
  r2 = r2.cwiseMax(0.0);

  const double s = params.outputscale();
  const double sqrt5 = std::sqrt(5.0);
  Eigen::MatrixXd K(r2.rows(), r2.cols());
  for (Eigen::Index j = 0; j < r2.cols(); ++j) {
    for (Eigen::Index i = 0; i < r2.rows(); ++i) {
      const double r = std::sqrt(r2(i, j));
      const double u = sqrt5 * r;
      K(i, j) = s * (1.0 + u + u * u / 3.0) * std::exp(-u);
    }
  }
  return K;
}

Eigen::VectorXd matern52_diag(const Eigen::MatrixXd& X, const KernelHyperparams& params) {
  if (X.cols() != params.input_dim()) {
    throw DimensionError("kernel input dimension does not match lengthscale count");
  }
  return Eigen::VectorXd::Constant(X.rows(), params.outputscale());
}

}  // namespace ovc
