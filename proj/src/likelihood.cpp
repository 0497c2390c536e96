#include "ovc/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ovc/linalg.hpp"
#include "ovc/rng.hpp"

namespace ovc {

namespace {

double softplus(double x) {
  // log(1 + e^x), overflow-safe
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

bool is_integer(double v) { return std::abs(v - std::round(v)) < 1e-9; }

}  // namespace

LikelihoodSpec LikelihoodSpec::gaussian(double sigma2) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw DimensionError("LikelihoodSpec: sigma2 must be positive");
  }
  return LikelihoodSpec(Family::Gaussian, sigma2, {});
}

LikelihoodSpec LikelihoodSpec::poisson() { return LikelihoodSpec(Family::Poisson, 0.0, {}); }

LikelihoodSpec LikelihoodSpec::bernoulli() { return LikelihoodSpec(Family::Bernoulli, 0.0, {}); }

LikelihoodSpec LikelihoodSpec::binomial(const Eigen::VectorXi& trials) {
  if ((trials.array() < 1).any()) {
    throw DimensionError("LikelihoodSpec: Binomial trial counts must be >= 1");
  }
  return LikelihoodSpec(Family::Binomial, 0.0, trials);
}

double LikelihoodSpec::sigma2() const {
  if (family_ != Family::Gaussian) throw DimensionError("LikelihoodSpec: not Gaussian");
  return sigma2_;
}

LikelihoodSpec LikelihoodSpec::slice(int offset, int count) const {
  if (family_ != Family::Binomial) return *this;
  if (offset < 0 || offset + count > trials_.size()) {
    throw DimensionError("LikelihoodSpec::slice: range out of bounds");
  }
  return LikelihoodSpec(Family::Binomial, 0.0, trials_.segment(offset, count));
}

void LikelihoodSpec::validate_support(const Eigen::VectorXd& y) const {
  switch (family_) {
    case Family::Gaussian:
      if (!y.allFinite()) throw DimensionError("Gaussian observations must be finite");
      break;
    case Family::Poisson:
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] < 0.0 || !is_integer(y[i])) {
          throw DimensionError("Poisson observations must be nonnegative integers");
        }
      }
      break;
    case Family::Bernoulli:
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] != 0.0 && y[i] != 1.0) {
          throw DimensionError("Bernoulli observations must be 0 or 1");
        }
      }
      break;
    case Family::Binomial:
      if (trials_.size() != y.size()) {
        throw DimensionError("Binomial trial counts must match observation count");
      }
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] < 0.0 || y[i] > trials_[i] || !is_integer(y[i])) {
          throw DimensionError("Binomial observations must be integers in [0, n(x)]");
        }
      }
      break;
  }
}

LogLikEval loglik_grad_hess(const LikelihoodSpec& lik, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& f) {
  if (y.size() != f.size()) throw DimensionError("loglik_grad_hess: size mismatch");
  lik.validate_support(y);
  const Eigen::Index n = y.size();
  LogLikEval out{0.0, Eigen::VectorXd(n), Eigen::VectorXd(n)};
  switch (lik.family()) {
    case LikelihoodSpec::Family::Gaussian: {
      const double s2 = lik.sigma2();
      const double c = -0.5 * std::log(2.0 * std::numbers::pi * s2);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double r = y[i] - f[i];
        out.logp += c - 0.5 * r * r / s2;
        out.grad[i] = r / s2;
        out.hess_diag[i] = -1.0 / s2;
      }
      break;
    }
    case LikelihoodSpec::Family::Poisson: {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double ef = std::exp(std::min(f[i], 700.0));
        out.logp += y[i] * f[i] - ef - std::lgamma(y[i] + 1.0);
        out.grad[i] = y[i] - ef;
        out.hess_diag[i] = -ef;
      }
      break;
    }
    case LikelihoodSpec::Family::Bernoulli: {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double p = sigmoid(f[i]);
        out.logp += y[i] * f[i] - softplus(f[i]);
        out.grad[i] = y[i] - p;
        out.hess_diag[i] = -std::max(p * (1.0 - p), 1e-300);
      }
      break;
    }
    case LikelihoodSpec::Family::Binomial: {
      const Eigen::VectorXi& trials = lik.trials();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double m = trials[i];
        const double p = sigmoid(f[i]);
        out.logp += log_choose(trials[i], static_cast<int>(std::round(y[i]))) + y[i] * f[i] -
                    m * softplus(f[i]);
        out.grad[i] = y[i] - m * p;
        out.hess_diag[i] = -std::max(m * p * (1.0 - p), 1e-300);
      }
      break;
    }
  }
  return out;
}

LaplaceSurrogate newton_map(const Eigen::MatrixXd& K, const Eigen::VectorXd& y,
                            const LikelihoodSpec& lik, double tol, int max_iter) {
  const Eigen::Index n = y.size();
  if (K.rows() != n || K.cols() != n) throw DimensionError("newton_map: K shape mismatch");

  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(n);  // a = K^{-1} f along the iteration
  // psi(f) = logp(y|f) - 0.5 a^T f
  double psi = loglik_grad_hess(lik, y, f).logp;

  LaplaceSurrogate result;
  for (int it = 1; it <= max_iter; ++it) {
    const LogLikEval ev = loglik_grad_hess(lik, y, f);
    const Eigen::VectorXd w = (-ev.hess_diag).cwiseMax(1e-300);
    const Eigen::VectorXd sw = w.cwiseSqrt();
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n);
    B.noalias() += sw.asDiagonal() * K * sw.asDiagonal();
    const CholeskyFactor cholB = cholesky_with_jitter(B);

    const Eigen::VectorXd b = w.cwiseProduct(f) + ev.grad;
    const Eigen::VectorXd a_new =
        b - sw.cwiseProduct(cholB.solve(sw.cwiseProduct(K * b)));
    const Eigen::VectorXd f_new = K * a_new;

    // Step halving keeps psi nondecreasing; a interpolates linearly with f.
    double step = 1.0;
    Eigen::VectorXd f_try, a_try;
    double psi_try;
    for (int ls = 0;; ++ls) {
      f_try = f + step * (f_new - f);
      a_try = a + step * (a_new - a);
      psi_try = loglik_grad_hess(lik, y, f_try).logp - 0.5 * a_try.dot(f_try);
      if (psi_try >= psi - 1e-12 * std::abs(psi) || ls >= 20) break;
      step *= 0.5;
    }
    const double delta = (f_try - f).cwiseAbs().maxCoeff();
    f = f_try;
    a = a_try;
    psi = psi_try;
    result.iterations = it;
    if (delta < tol) {
      result.converged = true;
      break;
    }
  }
  result.f_star = f;
  result.w_diag = (-loglik_grad_hess(lik, y, f).hess_diag).cwiseMax(1e-300);
  return result;
}

std::pair<Eigen::VectorXd, NoiseModel> laplace_surrogate_batch(const KernelHyperparams& prior,
                                                               const Eigen::MatrixXd& X_batch,
                                                               const Eigen::VectorXd& y,
                                                               const LikelihoodSpec& lik) {
  Eigen::MatrixXd K = matern52_ard(X_batch, X_batch, prior);
  K.diagonal().array() += 1e-8 * prior.outputscale();
  // Non-converged runs still return the last iterate; it remains a valid
  // Gaussian surrogate, just a looser one.
  const LaplaceSurrogate fit = newton_map(K, y, lik);
  return {fit.f_star, NoiseModel::diagonal(fit.w_diag.cwiseInverse())};
}

double expected_log_lik(const LikelihoodSpec& lik, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& mu, const Eigen::VectorXd& var) {
  if (y.size() != mu.size() || y.size() != var.size()) {
    throw DimensionError("expected_log_lik: size mismatch");
  }
  const Eigen::Index n = y.size();
  if (lik.is_gaussian()) {
    const double s2 = lik.sigma2();
    double acc = -0.5 * n * std::log(2.0 * std::numbers::pi * s2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = y[i] - mu[i];
      acc -= 0.5 * (r * r + var[i]) / s2;
    }
    return acc;
  }
  static const auto gh = gauss_hermite(20);
  const Eigen::VectorXd& nodes = gh.first;
  const Eigen::VectorXd& weights = gh.second;
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  double acc = 0.0;
  Eigen::VectorXd yi(1), fi(1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sd = std::sqrt(std::max(var[i], 0.0));
    const LikelihoodSpec lik_i = lik.slice(static_cast<int>(i), 1);
    yi[0] = y[i];
    double e = 0.0;
    for (Eigen::Index q = 0; q < nodes.size(); ++q) {
      // Clamp extreme latent values so Poisson exp(f) cannot overflow.
      fi[0] = std::clamp(mu[i] + std::numbers::sqrt2 * sd * nodes[q], -500.0, 500.0);
      e += weights[q] * loglik_grad_hess(lik_i, yi, fi).logp;
    }
    acc += inv_sqrt_pi * e;
  }
  return acc;
}

}  // namespace ovc
