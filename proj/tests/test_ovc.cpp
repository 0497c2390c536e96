#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "ovc/ovc.hpp"
#include "ovc/rng.hpp"

using namespace ovc;

namespace {

Eigen::MatrixXd random_inputs(int n, int d, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = rng.uniform(lo, hi);
  return X;
}

Eigen::VectorXd noisy_sine(const Eigen::MatrixXd& X, Rng& rng, double sd, double mean = 0.0) {
  Eigen::VectorXd y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    y[i] = std::sin(5.0 * X(i, 0)) + sd * rng.normal() + mean;
  }
  return y;
}

VariationalState trained_state(int n, int p, Rng& rng, double mean_const = 0.0,
                               double s2 = 0.05) {
  const KernelHyperparams params(Eigen::VectorXd::Constant(1, rng.uniform(0.2, 0.5)),
                                 rng.uniform(0.6, 1.5), mean_const, s2);
  const Eigen::MatrixXd X = random_inputs(n, 1, rng);
  const Eigen::VectorXd y = noisy_sine(X, rng, std::sqrt(s2), mean_const);
  const NoiseModel noise = NoiseModel::homoskedastic(s2, n);
  const InducingSet Z = select_inducing(X, noise, params, p);
  return canonical_to_variational(canonical_from_data(X, y, noise, Z, params));
}

}  // namespace

TEST_CASE("pseudo-data of a state fit at its own inducing points recovers the data") {
  Rng rng(1);
  for (double mean_const : {0.0, 0.7}) {
    const KernelHyperparams params(Eigen::VectorXd::Constant(1, 0.4), 1.0, mean_const, 0.1);
    // jittered grid: distinct, well-separated inducing points keep K_uu
    // comfortably positive definite
    Eigen::MatrixXd Zm(6, 1);
    for (int i = 0; i < 6; ++i) Zm(i, 0) = i / 6.0 + 0.05 * rng.uniform();
    const Eigen::VectorXd y = noisy_sine(Zm, rng, 0.1, mean_const);
    const double s2 = 0.1;
    const InducingSet Z(Zm);
    const VariationalState state = canonical_to_variational(
        canonical_from_data(Zm, y, NoiseModel::homoskedastic(s2, 6), Z, params));
    const PseudoDataset pseudo = to_pseudo_data(state);
    CHECK((pseudo.y_hat - y).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((pseudo.Sigma_yhat - s2 * Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() <
          1e-6);
  }
}

TEST_CASE("pseudo-noise diverges for a barely informed state but stays PSD") {
  Rng rng(2);
  const KernelHyperparams params(Eigen::VectorXd::Constant(1, 0.4), 1.0, 0.0, 0.1);
  Eigen::MatrixXd Zm(5, 1);
  Zm << 0.0, 0.25, 0.5, 0.75, 1.0;
  // observations at every inducing point but with enormous noise: C is full
  // rank yet tiny, so the state sits just inside the prior boundary
  const Eigen::VectorXd y = noisy_sine(Zm, rng, 0.1);
  const VariationalState state = canonical_to_variational(canonical_from_data(
      Zm, y, NoiseModel::homoskedastic(1e4, 5), InducingSet(Zm), params));
  const PseudoDataset pseudo = to_pseudo_data(state);
  CHECK(pseudo.max_noise() > 1e3);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pseudo.Sigma_yhat);
  CHECK(eig.eigenvalues().minCoeff() > -1e-8 * pseudo.Sigma_yhat.diagonal().sum());
}

TEST_CASE("exact GP on the pseudo-data alone reproduces the sparse posterior") {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const VariationalState state = trained_state(30, 6, rng, seed % 2 == 0 ? 0.0 : -0.4);
    const PseudoDataset pseudo = to_pseudo_data(state);
    const ExactGpModel gp = fit_exact(pseudo.Z_prev, pseudo.y_hat,
                                      NoiseModel::dense(pseudo.Sigma_yhat), state.params);
    const Eigen::MatrixXd Xs = random_inputs(20, 1, rng, -0.2, 1.2);
    const PosteriorGaussian a = predict(gp, Xs);
    const PosteriorGaussian b = sgpr_predict(state, Xs);
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("ovc_condition with an empty batch equals the sparse predictive") {
  Rng rng(3);
  const VariationalState state = trained_state(25, 5, rng, 0.3);
  const FantasyModel fm = ovc_condition(state, Eigen::MatrixXd(0, 1), Eigen::MatrixXd(0, 1),
                                        NoiseModel::empty());
  CHECK(fm.num_pseudo == 5);
  const Eigen::MatrixXd Xs = random_inputs(15, 1, rng);
  const PosteriorGaussian a = predict(fm.gp, Xs);
  const PosteriorGaussian b = sgpr_predict(state, Xs);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("ovc_condition with inducing points on all data recovers exact conditioning") {
  Rng rng(4);
  const int n = 30;
  const KernelHyperparams params(Eigen::VectorXd::Constant(1, 0.35), 1.2, 0.1, 0.09);
  Eigen::MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) X(i, 0) = i / static_cast<double>(n) + 0.01 * rng.uniform();
  const Eigen::VectorXd y = noisy_sine(X, rng, 0.3, 0.1);
  const double s2 = 0.09;
  const VariationalState state = canonical_to_variational(
      canonical_from_data(X, y, NoiseModel::homoskedastic(s2, n), InducingSet(X), params));

  const Eigen::MatrixXd Xn = random_inputs(5, 1, rng);
  const Eigen::VectorXd yn = noisy_sine(Xn, rng, 0.3, 0.1);
  const FantasyModel fm = ovc_condition(state, Xn, yn, NoiseModel::homoskedastic(s2, 5));

  Eigen::MatrixXd Xall(n + 5, 1);
  Xall << X, Xn;
  Eigen::VectorXd yall(n + 5);
  yall << y, yn;
  const ExactGpModel full =
      fit_exact(Xall, yall, NoiseModel::homoskedastic(s2, n + 5), params);

  const Eigen::MatrixXd Xs = random_inputs(20, 1, rng);
  const PosteriorGaussian a = predict(fm.gp, Xs);
  const PosteriorGaussian b = predict(full, Xs);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("fantasy ensembles reduce variance at the conditioned location") {
  Rng rng(5);
  const VariationalState state = trained_state(20, 5, rng);
  Eigen::MatrixXd xq(1, 1);
  xq << 0.37;
  const PosteriorGaussian before = sgpr_predict(state, xq);

  const int B = 8;
  Eigen::MatrixXd Yq(1, B);
  const double sd = std::sqrt(before.variance[0]);
  for (int b = 0; b < B; ++b) Yq(0, b) = before.mean(0, 0) + sd * rng.normal();
  const FantasyModel fm = ovc_condition(state, xq, Yq, NoiseModel::homoskedastic(0.05, 1));
  CHECK(fm.gp.batch_size() == B);
  const PosteriorGaussian after = predict(fm.gp, xq, false);
  const double prior_var = state.params.outputscale();
  CHECK(after.variance[0] < before.variance[0]);
  CHECK(after.variance[0] < prior_var);
  // means differ across the ensemble
  CHECK((after.mean.maxCoeff() - after.mean.minCoeff()) > 1e-6);
}

TEST_CASE("stream_update is the identity for an empty batch over the same inducing set") {
  Rng rng(6);
  const VariationalState v = trained_state(18, 5, rng);
  const CanonicalState prev = variational_to_canonical(v);
  const CanonicalState out = stream_update(prev, Eigen::MatrixXd(0, 1), Eigen::VectorXd(0),
                                           NoiseModel::empty(), prev.Z, prev.params);
  const double cs = std::max(prev.c.cwiseAbs().maxCoeff(), 1.0);
  const double Cs = std::max(prev.C.cwiseAbs().maxCoeff(), 1.0);
  CHECK((out.c - prev.c).cwiseAbs().maxCoeff() / cs < 1e-8);
  CHECK((out.C - prev.C).cwiseAbs().maxCoeff() / Cs < 1e-8);
}

TEST_CASE("stream_update with fixed inducing set reduces to canonical additivity") {
  Rng rng(7);
  const KernelHyperparams params(Eigen::VectorXd::Constant(1, 0.4), 1.0, 0.0, 0.05);
  const InducingSet Z(random_inputs(6, 1, rng));
  const Eigen::MatrixXd X1 = random_inputs(10, 1, rng);
  const Eigen::VectorXd y1 = noisy_sine(X1, rng, 0.2);
  const Eigen::MatrixXd X2 = random_inputs(8, 1, rng);
  const Eigen::VectorXd y2 = noisy_sine(X2, rng, 0.2);
  const NoiseModel n1 = NoiseModel::homoskedastic(0.05, 10);
  const NoiseModel n2 = NoiseModel::homoskedastic(0.05, 8);

  const CanonicalState s1 = canonical_from_data(X1, y1, n1, Z, params);
  const CanonicalState streamed = stream_update(s1, X2, y2, n2, Z, params);
  const CanonicalState direct =
      canonical_add(s1, canonical_from_data(X2, y2, n2, Z, params));
  CHECK((streamed.c - direct.c).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((streamed.C - direct.C).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("five sequential batches with fixed Z and theta match the batch fit") {
  Rng rng(8);
  const KernelHyperparams params(Eigen::VectorXd::Constant(1, 0.3), 1.0, 0.2, 0.05);
  const int batches = 5, b = 40;
  const Eigen::MatrixXd X = random_inputs(batches * b, 1, rng);
  const Eigen::VectorXd y = noisy_sine(X, rng, 0.2, 0.2);
  const NoiseModel bnoise = NoiseModel::homoskedastic(0.05, b);
  const InducingSet Z =
      select_inducing(X.topRows(b), NoiseModel::homoskedastic(0.05, b), params, 16);

  CanonicalState state = canonical_from_data(X.topRows(b), y.head(b), bnoise, Z, params);
  for (int t = 1; t < batches; ++t) {
    state = stream_update(state, X.middleRows(t * b, b), y.segment(t * b, b), bnoise, Z,
                          params);
  }
  const CanonicalState batch = canonical_from_data(
      X, y, NoiseModel::homoskedastic(0.05, batches * b), Z, params);

  const Eigen::MatrixXd Xs = random_inputs(50, 1, rng);
  const PosteriorGaussian a = sgpr_predict(state, Xs);
  const PosteriorGaussian c = sgpr_predict(batch, Xs);
  CHECK((a.mean - c.mean).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.variance - c.variance).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("batch order does not change the final canonical state for fixed Z, theta") {
  Rng rng(9);
  const KernelHyperparams params(Eigen::VectorXd::Constant(1, 0.4), 1.0, 0.0, 0.05);
  const InducingSet Z(random_inputs(5, 1, rng));
  const Eigen::MatrixXd X = random_inputs(24, 1, rng);
  const Eigen::VectorXd y = noisy_sine(X, rng, 0.2);
  const NoiseModel bn = NoiseModel::homoskedastic(0.05, 8);

  auto run = [&](const std::vector<int>& order) {
    CanonicalState s{Z, params, Eigen::VectorXd::Zero(5), Eigen::MatrixXd::Zero(5, 5)};
    for (int idx : order) {
      s = stream_update(s, X.middleRows(idx * 8, 8), y.segment(idx * 8, 8), bn, Z, params);
    }
    return s;
  };
  const CanonicalState fwd = run({0, 1, 2});
  const CanonicalState rev = run({2, 0, 1});
  CHECK((fwd.c - rev.c).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((fwd.C - rev.C).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("reselect_inducing_online edge cases") {
  Rng rng(10);
  const VariationalState state = trained_state(20, 6, rng);

  SUBCASE("empty batch selects a subset of the old inducing set") {
    const InducingSet sel =
        reselect_inducing_online(state, Eigen::MatrixXd(0, 1), NoiseModel::empty(), 4);
    CHECK(sel.size() == 4);
    for (int i = 0; i < 4; ++i) {
      bool found = false;
      for (int j = 0; j < state.num_inducing(); ++j) {
        if ((sel.Z().row(i) - state.Z.Z().row(j)).cwiseAbs().maxCoeff() < 1e-12) found = true;
      }
      CHECK(found);
    }
  }

  SUBCASE("p equal to the stacked size returns the union") {
    const Eigen::MatrixXd Xb = random_inputs(3, 1, rng, 2.0, 3.0);  // away from old Z
    const InducingSet sel =
        reselect_inducing_online(state, Xb, NoiseModel::homoskedastic(0.05, 3), 9);
    CHECK(sel.size() == 9);
  }
}

TEST_CASE("repeated identical batches never increase variance at the batch points") {
  Rng rng(11);
  VariationalState state = trained_state(20, 6, rng);
  Eigen::MatrixXd Xb(2, 1);
  Xb << 0.25, 0.75;
  Eigen::VectorXd yb(2);
  yb << 0.4, -0.2;
  const NoiseModel bn = NoiseModel::homoskedastic(0.05, 2);
  Eigen::VectorXd prev_var =
      sgpr_predict(state, Xb, false).variance;
  for (int t = 0; t < 4; ++t) {
    state = stream_step(state, Xb, yb, bn, 8).first;
    const Eigen::VectorXd var = sgpr_predict(state, Xb, false).variance;
    CHECK(((prev_var - var).array() > -2e-6).all());
    prev_var = var;
  }
}

TEST_CASE("stream_step with a forced fixed inducing set equals the batch fit") {
  Rng rng(12);
  const KernelHyperparams params(Eigen::VectorXd::Constant(1, 0.3), 1.0, 0.0, 0.05);
  const int b = 20, batches = 3;
  const Eigen::MatrixXd X = random_inputs(batches * b, 1, rng);
  const Eigen::VectorXd y = noisy_sine(X, rng, 0.2);
  const NoiseModel bn = NoiseModel::homoskedastic(0.05, b);
  const InducingSet Z =
      select_inducing(X.topRows(b), NoiseModel::homoskedastic(0.05, b), params, 12);

  VariationalState state = canonical_to_variational(
      canonical_from_data(X.topRows(b), y.head(b), bn, Z, params));
  for (int t = 1; t < batches; ++t) {
    state = stream_step(state, X.middleRows(t * b, b), y.segment(t * b, b), bn, 12, &Z).first;

    const CanonicalState batch = canonical_from_data(
        X.topRows((t + 1) * b), y.head((t + 1) * b),
        NoiseModel::homoskedastic(0.05, (t + 1) * b), Z, params);
    const Eigen::MatrixXd Xs = random_inputs(25, 1, rng);
    const PosteriorGaussian a = sgpr_predict(state, Xs);
    const PosteriorGaussian c = sgpr_predict(batch, Xs);
    CHECK((a.mean - c.mean).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((a.variance - c.variance).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("pseudo-noise stays PSD over many random trained states") {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(40000 + seed);
    const VariationalState state = trained_state(10 + rng.below(40), 4 + rng.below(6), rng);
    const PseudoDataset pseudo = to_pseudo_data(state);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pseudo.Sigma_yhat);
    CHECK(eig.eigenvalues().minCoeff() >
          -1e-8 * std::max(pseudo.Sigma_yhat.diagonal().sum(), 1.0));
  }
}

TEST_CASE("snapshot round-trips bit-exactly through text") {
  Rng rng(13);
  const VariationalState state = trained_state(25, 6, rng, -0.3);
  const StateSnapshot snap = snapshot_state(state);

  std::stringstream ss;
  save_snapshot(ss, snap);
  const StateSnapshot back = load_snapshot(ss);

  CHECK(back.pseudo.Z_prev == snap.pseudo.Z_prev);
  CHECK(back.pseudo.y_hat == snap.pseudo.y_hat);
  CHECK(back.pseudo.Sigma_yhat == snap.pseudo.Sigma_yhat);
  CHECK(back.params.to_unconstrained() == snap.params.to_unconstrained());

  // a second save must produce identical bytes
  std::stringstream ss2;
  save_snapshot(ss2, back);
  std::stringstream ss3;
  save_snapshot(ss3, snap);
  CHECK(ss2.str() == ss3.str());

  // and the reconstructed state reproduces the original posterior
  const VariationalState rebuilt = state_from_snapshot(back);
  const Eigen::MatrixXd Xs = random_inputs(10, 1, rng);
  const PosteriorGaussian a = sgpr_predict(state, Xs);
  const PosteriorGaussian b = sgpr_predict(rebuilt, Xs);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.variance - b.variance).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("snapshot loader rejects malformed input") {
  std::stringstream bad("not-a-snapshot v1\n");
  CHECK_THROWS_AS(load_snapshot(bad), ConfigError);
}

TEST_CASE("fantasy model exposes a finite condition-number diagnostic") {
  Rng rng(14);
  const VariationalState state = trained_state(20, 5, rng);
  Eigen::MatrixXd xq(1, 1);
  xq << 0.5;
  Eigen::MatrixXd yq(1, 1);
  yq << 0.2;
  const FantasyModel fm = ovc_condition(state, xq, yq, NoiseModel::homoskedastic(0.05, 1));
  const double cond = fm.train_cov_condition();
  CHECK(cond > 1.0);
  CHECK(cond < 1e9);
}
