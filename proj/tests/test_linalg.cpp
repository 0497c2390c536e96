#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "ovc/linalg.hpp"
#include "ovc/rng.hpp"

using namespace ovc;

namespace {

Eigen::MatrixXd random_spd(int n, Rng& rng, double diag_boost = 0.0) {
  Eigen::MatrixXd G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = rng.normal();
  Eigen::MatrixXd A = G * G.transpose();
  A.diagonal().array() += diag_boost;
  return A;
}

// Exhaustive one-step pivot oracle: actually performs each candidate rank-1
// elimination and measures the resulting residual trace.
int best_pivot_brute_force(const Eigen::MatrixXd& R) {
  int best = -1;
  double best_trace = R.diagonal().sum() + 1.0;
  for (int j = 0; j < R.rows(); ++j) {
    if (R(j, j) <= 0.0) continue;
    const Eigen::VectorXd l = R.col(j) / std::sqrt(R(j, j));
    const double tr = (R - l * l.transpose()).diagonal().sum();
    if (tr < best_trace - 1e-12) {
      best_trace = tr;
      best = j;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("cholesky_with_jitter identity needs no jitter") {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(4, 4);
  const CholeskyFactor f = cholesky_with_jitter(I);
  CHECK(f.jitter_used == 0.0);
  CHECK((f.L - I).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("cholesky_with_jitter rank-1 input succeeds with nonzero jitter") {
  Eigen::VectorXd v(3);
  v << 1.0, 2.0, 3.0;
  const Eigen::MatrixXd A = v * v.transpose();
  const CholeskyFactor f = cholesky_with_jitter(A);
  CHECK(f.jitter_used > 0.0);
  const Eigen::MatrixXd rec = f.L * f.L.transpose();
  Eigen::MatrixXd expected = A;
  expected.diagonal().array() += f.jitter_used;
  CHECK((rec - expected).norm() <= 1e-6 * expected.norm());
}

TEST_CASE("cholesky_with_jitter reconstructs a random SPD matrix") {
  Rng rng(7);
  const Eigen::MatrixXd A = random_spd(5, rng, 0.5);
  const CholeskyFactor f = cholesky_with_jitter(A);
  CHECK(f.jitter_used == 0.0);
  CHECK((f.L * f.L.transpose() - A).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("cholesky_with_jitter rejects indefinite input") {
  Eigen::MatrixXd A = -Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(cholesky_with_jitter(A), NumericalError);
  Eigen::MatrixXd B(2, 2);
  B << 1.0, 0.5, -0.5, 1.0;  // not symmetric
  CHECK_THROWS_AS(cholesky_with_jitter(B), DimensionError);
}

TEST_CASE("pivoted_cholesky on the identity") {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(6, 6);
  const PivotedFactor f = pivoted_cholesky(I, 2);
  CHECK(f.residual_trace == doctest::Approx(4.0));
  // ties broken by lowest index
  CHECK(f.pivots == std::vector<int>{0, 1});
}

TEST_CASE("pivoted_cholesky picks the largest diagonal of a diagonal matrix") {
  Eigen::MatrixXd A = Eigen::Vector3d(4.0, 1.0, 9.0).asDiagonal();
  const PivotedFactor f = pivoted_cholesky(A, 1);
  CHECK(f.pivots == std::vector<int>{2});
  CHECK(f.residual_trace == doctest::Approx(5.0));
}

TEST_CASE("pivoted_cholesky agrees with the exhaustive one-step oracle") {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const Eigen::MatrixXd A = random_spd(8, rng);
    const PivotedFactor f = pivoted_cholesky(A, 3);
    Eigen::MatrixXd R = A;
    for (std::size_t step = 0; step < f.pivots.size(); ++step) {
      const int oracle = best_pivot_brute_force(R);
      REQUIRE(f.pivots[step] == oracle);
      const Eigen::VectorXd l = R.col(oracle) / std::sqrt(R(oracle, oracle));
      R -= l * l.transpose();
    }
  }
}

TEST_CASE("pivoted_cholesky residual trace is monotone and reconstructs at full rank") {
  Rng rng(11);
  const Eigen::MatrixXd A = random_spd(10, rng, 0.1);
  double prev = A.diagonal().sum();
  for (int k = 1; k <= 10; ++k) {
    const PivotedFactor f = pivoted_cholesky(A, k);
    CHECK(f.residual_trace <= prev + 1e-10);
    prev = f.residual_trace;
  }
  const PivotedFactor full = pivoted_cholesky(A, 10);
  CHECK((full.L * full.L.transpose() - A).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("woodbury_inverse_update no-op for U = 0") {
  Rng rng(3);
  const Eigen::MatrixXd A = random_spd(5, rng, 0.5);
  const Eigen::MatrixXd S =
      cholesky_with_jitter(A).solve_upper(Eigen::MatrixXd::Identity(5, 5));
  const Eigen::MatrixXd R =
      woodbury_inverse_update(S, Eigen::MatrixXd::Zero(5, 2), Eigen::MatrixXd::Identity(2, 2));
  CHECK((R * R.transpose() - A.inverse()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("woodbury_inverse_update Sherman-Morrison case") {
  const Eigen::MatrixXd S = Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(3, 1);
  U(0, 0) = 1.0;
  const Eigen::MatrixXd R = woodbury_inverse_update(S, U, Eigen::MatrixXd::Ones(1, 1));
  const Eigen::MatrixXd inv = R * R.transpose();
  CHECK(inv(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(inv(1, 1) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("woodbury_inverse_update matches dense recompute on random problems") {
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng(100 + seed);
    const int n = 4 + rng.below(17);  // up to 20
    const Eigen::MatrixXd A = random_spd(n, rng, 0.5);
    Eigen::MatrixXd U(n, 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 2; ++j) U(i, j) = rng.normal();
    const Eigen::MatrixXd V = random_spd(2, rng, 0.1);
    const Eigen::MatrixXd S =
        cholesky_with_jitter(A).solve_upper(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd R = woodbury_inverse_update(S, U, V);
    const Eigen::MatrixXd expected = (A + U * V * U.transpose()).inverse();
    const Eigen::MatrixXd got = R * R.transpose();
    CHECK((got - expected).norm() <= 1e-8 * expected.norm());
  }
}

TEST_CASE("symmetric_condition_number of a known spectrum") {
  Eigen::MatrixXd A = Eigen::Vector3d(4.0, 1.0, 0.5).asDiagonal();
  CHECK(symmetric_condition_number(A) == doctest::Approx(8.0));
}
