#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ovc/exact_gp.hpp"
#include "ovc/likelihood.hpp"
#include "ovc/rng.hpp"

using namespace ovc;

namespace {

// independent scalar oracle: central differences of logp
void check_grad_hess_fd(const LikelihoodSpec& lik, double y, double f) {
  Eigen::VectorXd yv(1), fv(1);
  yv << y;
  const double h = 1e-5 * std::max(1.0, std::abs(f));
  auto lp = [&](double fx) {
    fv << fx;
    return loglik_grad_hess(lik, yv, fv).logp;
  };
  const double gp = (lp(f + h) - lp(f - h)) / (2.0 * h);
  const double hp = (lp(f + h) - 2.0 * lp(f) + lp(f - h)) / (h * h);
  fv << f;
  const LogLikEval ev = loglik_grad_hess(lik, yv, fv);
  CHECK(std::abs(ev.grad[0] - gp) < 1e-5 * std::max(1.0, std::abs(gp)));
  CHECK(std::abs(ev.hess_diag[0] - hp) < 1e-4 * std::max(1.0, std::abs(hp)));
  CHECK(ev.hess_diag[0] < 0.0);  // log-concave families only
}

// 1D bisection on the MAP stationarity condition grad logp(f) - f / k = 0
double map_root_bisection(const LikelihoodSpec& lik, double y, double k) {
  Eigen::VectorXd yv(1), fv(1);
  yv << y;
  auto g = [&](double f) {
    fv << f;
    return loglik_grad_hess(lik, yv, fv).grad[0] - f / k;
  };
  double lo = -20.0, hi = 20.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("Gaussian gradients and Hessians are the closed forms") {
  const LikelihoodSpec lik = LikelihoodSpec::gaussian(0.25);
  Eigen::VectorXd y(3), f(3);
  y << 1.0, -0.5, 2.0;
  f << 0.0, 0.5, 2.0;
  const LogLikEval ev = loglik_grad_hess(lik, y, f);
  CHECK((ev.grad - (y - f) / 0.25).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ev.hess_diag.array() + 4.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("Poisson point values") {
  const LikelihoodSpec lik = LikelihoodSpec::poisson();
  Eigen::VectorXd y(1), f(1);
  y << 2.0;
  f << 0.0;
  const LogLikEval ev = loglik_grad_hess(lik, y, f);
  CHECK(ev.logp == doctest::Approx(-1.0 - std::log(2.0)).epsilon(1e-12));
  CHECK(ev.logp == doctest::Approx(-1.6931).epsilon(1e-4));
  CHECK(ev.grad[0] == doctest::Approx(1.0));
  CHECK(ev.hess_diag[0] == doctest::Approx(-1.0));
}

TEST_CASE("all families match finite differences over random draws") {
  Rng rng(101);
  int checked = 0;
  while (checked < 1000) {
    const double f = rng.uniform(-4.0, 4.0);
    switch (rng.below(4)) {
      case 0:
        check_grad_hess_fd(LikelihoodSpec::gaussian(rng.uniform(0.05, 2.0)),
                           rng.uniform(-3.0, 3.0), f);
        break;
      case 1:
        check_grad_hess_fd(LikelihoodSpec::poisson(), rng.below(8), f);
        break;
      case 2:
        check_grad_hess_fd(LikelihoodSpec::bernoulli(), rng.below(2), f);
        break;
      default: {
        const int trials = 1 + rng.below(30);
        check_grad_hess_fd(LikelihoodSpec::binomial(Eigen::VectorXi::Constant(1, trials)),
                           rng.below(trials + 1), f);
        break;
      }
    }
    ++checked;
  }
}

TEST_CASE("support validation") {
  CHECK_THROWS_AS(
      loglik_grad_hess(LikelihoodSpec::poisson(), Eigen::VectorXd::Constant(1, -1.0),
                       Eigen::VectorXd::Zero(1)),
      DimensionError);
  CHECK_THROWS_AS(
      loglik_grad_hess(LikelihoodSpec::bernoulli(), Eigen::VectorXd::Constant(1, 0.5),
                       Eigen::VectorXd::Zero(1)),
      DimensionError);
  CHECK_THROWS_AS(
      loglik_grad_hess(LikelihoodSpec::binomial(Eigen::VectorXi::Constant(1, 3)),
                       Eigen::VectorXd::Constant(1, 4.0), Eigen::VectorXd::Zero(1)),
      DimensionError);
  CHECK_THROWS_AS(LikelihoodSpec::binomial(Eigen::VectorXi::Zero(2)), DimensionError);
}

TEST_CASE("newton_map solves the Gaussian case in one iteration") {
  Rng rng(7);
  const int n = 6;
  Eigen::MatrixXd G(n, n);
  for (int i = 0; i < n * n; ++i) G(i / n, i % n) = rng.normal();
  const Eigen::MatrixXd K = G * G.transpose() + Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.normal();
  const double s2 = 0.3;
  const LaplaceSurrogate fit = newton_map(K, y, LikelihoodSpec::gaussian(s2));
  CHECK(fit.converged);
  CHECK(fit.iterations <= 2);  // quadratic objective: first step lands on the mode
  const Eigen::VectorXd expected =
      (K.inverse() + Eigen::MatrixXd::Identity(n, n) / s2).inverse() * (y / s2);
  CHECK((fit.f_star - expected).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("newton_map Poisson single point matches the bisection oracle") {
  Eigen::MatrixXd K(1, 1);
  K << 1.0;
  const LikelihoodSpec lik = LikelihoodSpec::poisson();

  // stationarity y - e^f = f; the y = 2 root sits near 0.4429, y = 1 at zero
  Eigen::VectorXd y2(1);
  y2 << 2.0;
  const double oracle2 = map_root_bisection(lik, 2.0, 1.0);
  CHECK(oracle2 == doctest::Approx(0.4429).epsilon(2.5e-3));
  const LaplaceSurrogate fit2 = newton_map(K, y2, lik);
  CHECK(fit2.converged);
  CHECK(fit2.f_star[0] == doctest::Approx(oracle2).epsilon(1e-6));

  Eigen::VectorXd y1(1);
  y1 << 1.0;
  const LaplaceSurrogate fit1 = newton_map(K, y1, lik);
  CHECK(fit1.f_star[0] == doctest::Approx(map_root_bisection(lik, 1.0, 1.0)).epsilon(1e-6));
  CHECK(std::abs(fit1.f_star[0]) < 1e-6);
}

TEST_CASE("newton_map reaches a stationary point of the MAP objective") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5;
    Eigen::MatrixXd G(n, n);
    for (int i = 0; i < n * n; ++i) G(i / n, i % n) = rng.normal();
    const Eigen::MatrixXd K = G * G.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd y(n);
    const LikelihoodSpec lik = trial % 2 == 0 ? LikelihoodSpec::poisson()
                                              : LikelihoodSpec::bernoulli();
    for (int i = 0; i < n; ++i) {
      y[i] = trial % 2 == 0 ? rng.below(6) : rng.below(2);
    }
    const double tol = 1e-6;
    const LaplaceSurrogate fit = newton_map(K, y, lik, tol);
    REQUIRE(fit.converged);
    const Eigen::VectorXd grad =
        loglik_grad_hess(lik, y, fit.f_star).grad - K.ldlt().solve(fit.f_star);
    CHECK(grad.norm() < 10.0 * tol);
  }
}

TEST_CASE("laplace_surrogate_batch Gaussian targets are the one-step smoothed values") {
  Rng rng(8);
  const KernelHyperparams params(Eigen::VectorXd::Constant(1, 0.5), 1.0, 0.0, 0.1);
  Eigen::MatrixXd X(4, 1);
  X << 0.0, 0.3, 0.6, 0.9;
  Eigen::VectorXd y(4);
  for (int i = 0; i < 4; ++i) y[i] = rng.normal();
  const double s2 = 0.1;
  const auto [targets, noise] = laplace_surrogate_batch(params, X, y, LikelihoodSpec::gaussian(s2));

  Eigen::MatrixXd K = matern52_ard(X, X, params);
  K.diagonal().array() += 1e-8;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(4, 4);
  const Eigen::VectorXd expected = (K.inverse() + I / s2).inverse() * (y / s2);
  CHECK((targets - expected).cwiseAbs().maxCoeff() < 1e-6);
  // surrogate differs from the raw observations but keeps the noise scale
  CHECK((targets - y).cwiseAbs().maxCoeff() > 1e-4);
  CHECK((noise.dense_cov() - s2 * I).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("binomial with one trial reduces to the bernoulli path") {
  const KernelHyperparams params(Eigen::VectorXd::Constant(1, 0.5), 1.0, 0.0, 0.1);
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 0.5, 1.0;
  Eigen::VectorXd y(3);
  y << 1.0, 0.0, 1.0;
  const auto [t_bern, n_bern] = laplace_surrogate_batch(params, X, y, LikelihoodSpec::bernoulli());
  const auto [t_bino, n_bino] = laplace_surrogate_batch(
      params, X, y, LikelihoodSpec::binomial(Eigen::VectorXi::Ones(3)));
  CHECK((t_bern - t_bino).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((n_bern.dense_cov() - n_bino.dense_cov()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("classifier built on the surrogate recovers well-separated labels") {
  Rng rng(77);
  const int n = 100;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const bool cls = i % 2 == 0;
    X(i, 0) = (cls ? -1.5 : 1.5) + 0.4 * rng.normal();
    X(i, 1) = 0.4 * rng.normal();
    y[i] = cls ? 1.0 : 0.0;
  }
  const KernelHyperparams params(Eigen::VectorXd::Constant(2, 1.0), 2.0, 0.0, 0.1);
  const auto [targets, noise] = laplace_surrogate_batch(params, X, y, LikelihoodSpec::bernoulli());
  const ExactGpModel m = fit_exact(X, targets, noise, params);
  const PosteriorGaussian post = predict(m, X, /*full_cov=*/false);
  int agree = 0;
  for (int i = 0; i < n; ++i) {
    if ((post.mean(i, 0) > 0.0) == (y[i] > 0.5)) ++agree;
  }
  CHECK(agree >= 95);
}

TEST_CASE("expected_log_lik gauss-hermite matches the Poisson closed form") {
  // E[y f - e^f] under N(mu, v) = y mu - exp(mu + v/2), minus log y!
  const LikelihoodSpec lik = LikelihoodSpec::poisson();
  Eigen::VectorXd y(2), mu(2), var(2);
  y << 3.0, 1.0;
  mu << 0.5, -0.2;
  var << 0.3, 0.8;
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    expected += y[i] * mu[i] - std::exp(mu[i] + 0.5 * var[i]) - std::lgamma(y[i] + 1.0);
  }
  CHECK(expected_log_lik(lik, y, mu, var) == doctest::Approx(expected).epsilon(1e-9));
}
