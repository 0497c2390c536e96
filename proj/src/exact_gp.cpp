#include "ovc/exact_gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "ovc/optim.hpp"

namespace ovc {

ExactGpModel fit_exact(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                       const NoiseModel& noise, const KernelHyperparams& params) {
  const Eigen::Index n = X.rows();
  if (Y.rows() != n) throw DimensionError("fit_exact: X and Y row counts differ");
  if (noise.size() != n) throw DimensionError("fit_exact: noise size mismatch");
  if (n == 0) throw DimensionError("fit_exact: need at least one observation");

  Eigen::MatrixXd Kn = matern52_ard(X, X, params);
  noise.add_to(Kn);
  CholeskyFactor chol = cholesky_with_jitter(Kn);

  ExactGpModel model{X, Y, noise, params, {}, {}, {}, chol.jitter_used};
  const Eigen::MatrixXd centered = Y.array() - params.mean_const();
  model.cache_A = chol.solve(centered);
  model.cache_R = chol.solve_upper(Eigen::MatrixXd::Identity(n, n));
  model.cache_L = std::move(chol.L);
  return model;
}

PosteriorGaussian predict(const ExactGpModel& model, const Eigen::MatrixXd& X_test,
                          bool full_cov) {
  if (X_test.cols() != model.X.cols()) {
    throw DimensionError("predict: test dimension mismatch");
  }
  const Eigen::MatrixXd K_wv = matern52_ard(X_test, model.X, model.params);
  PosteriorGaussian post;
  post.mean = (K_wv * model.cache_A).array() + model.params.mean_const();
  // V = R^T K_vw, so the predictive covariance is K_ww - V^T V.
  const Eigen::MatrixXd V = model.cache_R.transpose() * K_wv.transpose();
  if (full_cov) {
    Eigen::MatrixXd cov = matern52_ard(X_test, X_test, model.params);
    cov.noalias() -= V.transpose() * V;
    post.covariance = symmetrize(cov);
    post.variance = post.covariance.diagonal().cwiseMax(0.0);
  } else {
    post.variance =
        (matern52_diag(X_test, model.params) - V.colwise().squaredNorm().transpose())
            .cwiseMax(0.0);
  }
  return post;
}

double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const NoiseModel& noise, const KernelHyperparams& params) {
  const Eigen::Index n = X.rows();
  if (y.size() != n) throw DimensionError("log_marginal_likelihood: size mismatch");
  Eigen::MatrixXd Kn = matern52_ard(X, X, params);
  noise.add_to(Kn);
  const CholeskyFactor chol = cholesky_with_jitter(Kn);
  const Eigen::VectorXd yc = y.array() - params.mean_const();
  const Eigen::VectorXd w = chol.solve_lower(yc);
  return -0.5 * w.squaredNorm() - 0.5 * chol.log_det() -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

ExactGpModel condition_exact(const ExactGpModel& model, const Eigen::MatrixXd& X_new,
                             const Eigen::MatrixXd& Y_new, const NoiseModel& noise_new) {
  const Eigen::Index m = X_new.rows();
  if (m == 0) return model;
  if (X_new.cols() != model.X.cols()) throw DimensionError("condition_exact: dim mismatch");
  if (Y_new.rows() != m || Y_new.cols() != model.Y.cols()) {
    throw DimensionError("condition_exact: Y_new shape mismatch");
  }
  if (noise_new.size() != m) throw DimensionError("condition_exact: noise size mismatch");

  const Eigen::Index n = model.train_size();
  const Eigen::MatrixXd K_vn = matern52_ard(model.X, X_new, model.params);
  Eigen::MatrixXd D = matern52_ard(X_new, X_new, model.params);
  noise_new.add_to(D);
  D.diagonal().array() += model.jitter_used;

  // Block Cholesky of [[K+S, B],[B^T, D]] reusing the cached factor.
  const Eigen::MatrixXd L21t = model.cache_L.triangularView<Eigen::Lower>().solve(K_vn);
  Eigen::MatrixXd S22 = D;
  S22.noalias() -= L21t.transpose() * L21t;
  const CholeskyFactor chol22 = cholesky_with_jitter(S22);

  ExactGpModel out = model;
  out.X.conservativeResize(n + m, Eigen::NoChange);
  out.X.bottomRows(m) = X_new;
  out.Y.conservativeResize(n + m, Eigen::NoChange);
  out.Y.bottomRows(m) = Y_new;
  out.noise = NoiseModel::block_concat(model.noise, noise_new);

  out.cache_L = Eigen::MatrixXd::Zero(n + m, n + m);
  out.cache_L.topLeftCorner(n, n) = model.cache_L;
  out.cache_L.bottomLeftCorner(m, n) = L21t.transpose();
  out.cache_L.bottomRightCorner(m, m) = chol22.L;

  // R = L^{-T} in block form; the old block is reused unchanged.
  const Eigen::MatrixXd R22 =
      chol22.L.transpose().triangularView<Eigen::Upper>().solve(
          Eigen::MatrixXd::Identity(m, m));
  out.cache_R = Eigen::MatrixXd::Zero(n + m, n + m);
  out.cache_R.topLeftCorner(n, n) = model.cache_R;
  out.cache_R.topRightCorner(n, m).noalias() = -model.cache_R * L21t * R22;
  out.cache_R.bottomRightCorner(m, m) = R22;

  const Eigen::MatrixXd centered = out.Y.array() - model.params.mean_const();
  out.cache_A.noalias() =
      out.cache_R * (out.cache_R.transpose() * centered);
  return out;
}

double gamma_log_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double exact_train_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const KernelHyperparams& params) {
  const NoiseModel noise =
      NoiseModel::homoskedastic(params.noise_variance(), static_cast<int>(X.rows()));
  double obj = log_marginal_likelihood(X, y, noise, params);
  const Eigen::VectorXd ls = params.lengthscales();
  for (Eigen::Index i = 0; i < ls.size(); ++i) obj += gamma_log_pdf(ls[i], 3.0, 6.0);
  obj += gamma_log_pdf(params.outputscale(), 2.0, 0.15);
  return obj;
}

KernelHyperparams train_hypers_exact(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     const KernelHyperparams& init, int steps, double lr) {
  if (steps == 0) return init;
  const int d = static_cast<int>(X.cols());
  const ObjectiveFn objective = [&](const Eigen::VectorXd& v) {
    return exact_train_objective(X, y, KernelHyperparams::from_unconstrained(v, d));
  };
  const AdamResult res = adam_ascent(objective, init.to_unconstrained(), steps, lr);
  return KernelHyperparams::from_unconstrained(res.x, d);
}

}  // namespace ovc
