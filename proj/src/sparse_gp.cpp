#include "ovc/sparse_gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>

#include "ovc/linalg.hpp"
#include "ovc/optim.hpp"

namespace ovc {

namespace {

CholeskyFactor kuu_chol(const InducingSet& Z, const KernelHyperparams& params) {
  return cholesky_with_jitter(matern52_ard(Z.Z(), Z.Z(), params));
}

/// Eigendecomposition of S_bar with the prior-boundary check; throws when the
/// state is at or wider than the prior (whitened eigenvalue >= 1 to double
/// precision). Densely informed states can sit within 1e-10 of the boundary
/// and must still be invertible, so the cut is placed at the roundoff edge.
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> checked_s_bar_eig(const Eigen::MatrixXd& S_bar) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(S_bar));
  if (eig.info() != Eigen::Success) {
    throw NumericalError("S_bar eigendecomposition failed");
  }
  if (eig.eigenvalues().maxCoeff() > 1.0 - 1e-14) {
    throw NumericalError(
        "variational state is at or wider than the prior "
        "(whitened covariance eigenvalue >= 1); the closed form cannot be inverted");
  }
  return eig;
}

double hyperprior_log_density(const KernelHyperparams& params) {
  double acc = 0.0;
  const Eigen::VectorXd ls = params.lengthscales();
  for (Eigen::Index i = 0; i < ls.size(); ++i) acc += gamma_log_pdf(ls[i], 3.0, 6.0);
  acc += gamma_log_pdf(params.outputscale(), 2.0, 0.15);
  return acc;
}

}  // namespace

InducingSet::InducingSet(const Eigen::MatrixXd& Z) : Z_(Z) {
  if (Z.rows() < 1) throw DimensionError("InducingSet: need at least one location");
  if (!Z.allFinite()) throw DimensionError("InducingSet: non-finite locations");
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < Z.rows(); ++j) {
      if ((Z.row(i) - Z.row(j)).cwiseAbs().maxCoeff() < 1e-10) {
        throw DimensionError("InducingSet: duplicate inducing locations");
      }
    }
  }
}

CanonicalState canonical_from_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const NoiseModel& noise, const InducingSet& Z,
                                   const KernelHyperparams& params) {
  const Eigen::Index n = X.rows();
  const int p = Z.size();
  if (y.size() != n) throw DimensionError("canonical_from_data: X/y mismatch");
  if (noise.size() != n) throw DimensionError("canonical_from_data: noise size mismatch");
  CanonicalState out{Z, params, Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Zero(p, p)};
  if (n == 0) return out;
  const Eigen::MatrixXd K_uv = matern52_ard(Z.Z(), X, params);
  const Eigen::VectorXd yc = y.array() - params.mean_const();
  out.c.noalias() = K_uv * noise.solve(yc);
  out.C = symmetrize(K_uv * noise.solve(K_uv.transpose()));
  return out;
}

CanonicalState canonical_add(const CanonicalState& a, const CanonicalState& b) {
  if (a.Z.size() != b.Z.size() || (a.Z.Z() - b.Z.Z()).cwiseAbs().maxCoeff() > 0.0) {
    throw DimensionError("canonical_add: inducing sets differ");
  }
  CanonicalState out = a;
  out.c += b.c;
  out.C += b.C;
  return out;
}

VariationalState canonical_to_variational(const CanonicalState& state) {
  const CholeskyFactor Lk = kuu_chol(state.Z, state.params);
  // With W = L^{-1} C L^{-T} the closed form whitens to S_bar = (I + W)^{-1}
  // and m_bar = (I + W)^{-1} L^{-1} c, which keeps the prior's conditioning
  // out of the solve entirely. W is PSD in exact arithmetic but roundoff on
  // ill-conditioned K_uu can leave small negative eigenvalues; clamp them to a
  // positive floor so the resulting state stays strictly inside the prior
  // (uninformed directions then carry huge, finite pseudo-noise).
  const Eigen::MatrixXd W =
      symmetrize(Lk.solve_lower(Lk.solve_lower(state.C).transpose()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(W);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("canonical_to_variational: eigen decomposition failed");
  }
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(1e-12);
  const Eigen::MatrixXd& Q = eig.eigenvectors();
  const Eigen::VectorXd inv_one_plus = (1.0 + lam.array()).inverse();
  VariationalState out{
      state.Z, state.params,
      Q * inv_one_plus.asDiagonal() * (Q.transpose() * Lk.solve_lower(state.c)),
      symmetrize(Q * inv_one_plus.asDiagonal() * Q.transpose())};
  return out;
}

CanonicalState variational_to_canonical(const VariationalState& state) {
  const CholeskyFactor Lk = kuu_chol(state.Z, state.params);
  const auto eig = checked_s_bar_eig(state.S_bar);
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(1e-12);
  // c = L S_bar^{-1} m_bar and C = L (S_bar^{-1} - I) L^T in the shared eigenbasis.
  const Eigen::MatrixXd& Q = eig.eigenvectors();
  const Eigen::VectorXd inv_lam = lam.cwiseInverse();
  const Eigen::VectorXd inv_minus_one = inv_lam.array() - 1.0;
  CanonicalState out{state.Z, state.params, {}, {}};
  out.c = Lk.L * (Q * inv_lam.asDiagonal() * (Q.transpose() * state.m_bar));
  out.C =
      symmetrize(Lk.L * (Q * inv_minus_one.asDiagonal() * Q.transpose()) * Lk.L.transpose());
  return out;
}

PosteriorGaussian sgpr_predict(const VariationalState& state, const Eigen::MatrixXd& X_test,
                               bool full_cov) {
  if (X_test.cols() != state.Z.dim()) throw DimensionError("sgpr_predict: dim mismatch");
  const CholeskyFactor Lk = kuu_chol(state.Z, state.params);
  const Eigen::MatrixXd K_uw = matern52_ard(state.Z.Z(), X_test, state.params);
  const Eigen::MatrixXd A = Lk.solve_lower(K_uw);  // p x k
  PosteriorGaussian post;
  post.mean = (A.transpose() * state.m_bar).array() + state.params.mean_const();
  const Eigen::MatrixXd I_minus_S =
      Eigen::MatrixXd::Identity(state.num_inducing(), state.num_inducing()) - state.S_bar;
  if (full_cov) {
    Eigen::MatrixXd cov = matern52_ard(X_test, X_test, state.params);
    cov.noalias() -= A.transpose() * I_minus_S * A;
    post.covariance = symmetrize(cov);
    post.variance = post.covariance.diagonal().cwiseMax(0.0);
  } else {
    const Eigen::MatrixXd IA = I_minus_S * A;
    Eigen::VectorXd reduction(X_test.rows());
    for (Eigen::Index j = 0; j < A.cols(); ++j) reduction[j] = A.col(j).dot(IA.col(j));
    post.variance = (matern52_diag(X_test, state.params) - reduction).cwiseMax(0.0);
  }
  return post;
}

PosteriorGaussian sgpr_predict(const CanonicalState& state, const Eigen::MatrixXd& X_test,
                               bool full_cov) {
  return sgpr_predict(canonical_to_variational(state), X_test, full_cov);
}

double sgpr_collapsed_elbo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const NoiseModel& noise, const InducingSet& Z,
                           const KernelHyperparams& params) {
  const Eigen::Index n = X.rows();
  if (y.size() != n || noise.size() != n) throw DimensionError("sgpr_collapsed_elbo: mismatch");
  const int p = Z.size();
  const CholeskyFactor Lk = kuu_chol(Z, params);
  const Eigen::MatrixXd K_uv = matern52_ard(Z.Z(), X, params);
  const Eigen::MatrixXd B = Lk.solve_lower(K_uv);  // p x n, Q_vv = B^T B
  const Eigen::VectorXd yc = y.array() - params.mean_const();

  // log N(yc | 0, Sigma + B^T B) via the p x p inner system
  // I + B Sigma^{-1} B^T (Woodbury and the matrix determinant lemma).
  const Eigen::VectorXd Sinv_y = noise.solve(yc);
  const Eigen::MatrixXd Sinv_Bt = noise.solve(B.transpose());  // n x p
  Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(p, p);
  inner.noalias() += B * Sinv_Bt;
  const CholeskyFactor chol_inner = cholesky_with_jitter(inner);
  const Eigen::VectorXd B_Sinv_y = B * Sinv_y;
  const Eigen::VectorXd inner_solve = chol_inner.solve(B_Sinv_y);
  const double quad = yc.dot(Sinv_y) - B_Sinv_y.dot(inner_solve);
  const double log_det = noise.log_det() + chol_inner.log_det();
  const double log_lik =
      -0.5 * quad - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);

  // 0.5 tr(Sigma^{-1}(K_vv - Q_vv)); only diagonal blocks of K - Q are needed.
  Eigen::MatrixXd Kd = matern52_ard(X, X, params);
  Kd.noalias() -= B.transpose() * B;
  const double trace_term = noise.solve(Kd).trace();
  return log_lik - 0.5 * trace_term;
}

double svgp_elbo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LikelihoodSpec& lik,
                 const VariationalState& state) {
  if (X.rows() != y.size()) throw DimensionError("svgp_elbo: X/y mismatch");
  double lik_term = 0.0;
  if (y.size() > 0) {
    const PosteriorGaussian marg = sgpr_predict(state, X, /*full_cov=*/false);
    lik_term = expected_log_lik(lik, y, marg.mean.col(0), marg.variance);
  }
  // KL(N(m_bar, S_bar) || N(0, I)) in whitened coordinates.
  const int p = state.num_inducing();
  const CholeskyFactor cholS = cholesky_with_jitter(state.S_bar);
  const double kl = 0.5 * (state.S_bar.trace() + state.m_bar.squaredNorm() - p -
                           cholS.log_det());
  return lik_term - kl;
}

InducingSet select_inducing(const Eigen::MatrixXd& X_cand, const NoiseModel& noise,
                            const KernelHyperparams& params, int p) {
  const Eigen::Index n = X_cand.rows();
  if (p < 1 || p > n) throw DimensionError("select_inducing: p out of range");
  if (noise.size() != n) throw DimensionError("select_inducing: noise size mismatch");
  const Eigen::MatrixXd K = matern52_ard(X_cand, X_cand, params);
  const Eigen::MatrixXd scaled =
      symmetrize(noise.inv_sqrt_apply(noise.inv_sqrt_apply(K).transpose()));
  const PivotedFactor piv = pivoted_cholesky(scaled, p, 0.0);

  std::vector<int> chosen = piv.pivots;
  // The factorization may stop early on numerically rank-deficient inputs;
  // fill up with unchosen rows, skipping near-duplicates of already chosen ones.
  for (Eigen::Index j = 0; j < n && static_cast<int>(chosen.size()) < p; ++j) {
    bool ok = true;
    for (int idx : chosen) {
      if ((X_cand.row(j) - X_cand.row(idx)).cwiseAbs().maxCoeff() < 1e-10) {
        ok = false;
        break;
      }
    }
    if (ok) chosen.push_back(static_cast<int>(j));
  }
  Eigen::MatrixXd Zsel(chosen.size(), X_cand.cols());
  for (std::size_t i = 0; i < chosen.size(); ++i) Zsel.row(i) = X_cand.row(chosen[i]);
  return InducingSet(Zsel);
}

std::pair<double, double> osgpr_trace_terms(const VariationalState& prev,
                                            const InducingSet& new_Z,
                                            const KernelHyperparams& new_params,
                                            const Eigen::MatrixXd& X_batch, double sigma2) {
  const CholeskyFactor L_new = kuu_chol(new_Z, new_params);

  double trace1 = 0.0;
  if (X_batch.rows() > 0) {
    const Eigen::MatrixXd K_uv = matern52_ard(new_Z.Z(), X_batch, new_params);
    const Eigen::MatrixXd B = L_new.solve_lower(K_uv);
    trace1 = (matern52_diag(X_batch, new_params).sum() - B.squaredNorm()) / sigma2;
  }

  // trace2 = tr(Sigma_yhat^{-1} (K_u'u' - K_u'u K_uu^{-1} K_uu')) where the
  // pseudo-noise precision is L'^{-T}(S_bar^{-1} - I)L'^{-1} from the old state.
  const CholeskyFactor L_old = kuu_chol(prev.Z, prev.params);
  const auto eig = checked_s_bar_eig(prev.S_bar);
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(1e-12);
  const Eigen::MatrixXd& Q = eig.eigenvectors();
  const Eigen::VectorXd inv_minus_one = lam.cwiseInverse().array() - 1.0;
  const Eigen::MatrixXd P = Q * inv_minus_one.asDiagonal() * Q.transpose();
  const Eigen::MatrixXd Linv = L_old.solve_lower(
      Eigen::MatrixXd::Identity(prev.num_inducing(), prev.num_inducing()));
  const Eigen::MatrixXd pseudo_precision = symmetrize(Linv.transpose() * P * Linv);

  const Eigen::MatrixXd K_oo = matern52_ard(prev.Z.Z(), prev.Z.Z(), new_params);
  const Eigen::MatrixXd K_on = matern52_ard(prev.Z.Z(), new_Z.Z(), new_params);
  const Eigen::MatrixXd Bn = L_new.solve_lower(K_on.transpose());
  Eigen::MatrixXd resid = K_oo;
  resid.noalias() -= Bn.transpose() * Bn;
  const double trace2 = pseudo_precision.cwiseProduct(resid).sum();
  return {trace1, trace2};
}

double sparse_train_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const NoiseModel& noise, const InducingSet& Z,
                              const KernelHyperparams& params) {
  return sgpr_collapsed_elbo(X, y, noise, Z, params) + hyperprior_log_density(params);
}

namespace {

/// Packs hyperparameters (and optionally inducing locations) for the
/// finite-difference trainer.
struct SparsePack {
  int dim;
  int p;
  bool with_z;

  Eigen::VectorXd pack(const KernelHyperparams& params, const InducingSet& Z) const {
    const int hs = KernelHyperparams::unconstrained_size(dim);
    Eigen::VectorXd v(hs + (with_z ? p * dim : 0));
    v.head(hs) = params.to_unconstrained();
    if (with_z) {
      v.tail(p * dim) = Eigen::Map<const Eigen::VectorXd>(Z.Z().data(), p * dim);
    }
    return v;
  }

  std::pair<KernelHyperparams, Eigen::MatrixXd> unpack(const Eigen::VectorXd& v,
                                                       const Eigen::MatrixXd& Z_fixed) const {
    const int hs = KernelHyperparams::unconstrained_size(dim);
    KernelHyperparams params = KernelHyperparams::from_unconstrained(v.head(hs), dim);
    Eigen::MatrixXd Z = Z_fixed;
    if (with_z) {
      Z = Eigen::Map<const Eigen::MatrixXd>(v.tail(p * dim).data(), p, dim);
    }
    return {params, Z};
  }
};

/// One Adam run over the collapsed bound for fixed surrogate targets/noise.
/// `gaussian_noise_from_params` switches between the likelihood's own noise
/// and a fixed heteroskedastic surrogate noise.
SparseFit fit_collapsed(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const NoiseModel* fixed_noise, const InducingSet& Z_init,
                        const KernelHyperparams& params_init, int steps, double lr,
                        bool optimize_inducing) {
  const SparsePack pack{static_cast<int>(X.cols()), Z_init.size(), optimize_inducing};
  const auto noise_for = [&](const KernelHyperparams& params) {
    return fixed_noise != nullptr
               ? *fixed_noise
               : NoiseModel::homoskedastic(params.noise_variance(),
                                           static_cast<int>(X.rows()));
  };

  KernelHyperparams params = params_init;
  Eigen::MatrixXd Z = Z_init.Z();
  if (steps > 0) {
    const ObjectiveFn objective = [&](const Eigen::VectorXd& v) {
      try {
        const auto [par, Zm] = pack.unpack(v, Z_init.Z());
        return sparse_train_objective(X, y, noise_for(par), InducingSet(Zm), par);
      } catch (const std::exception&) {
        return -std::numeric_limits<double>::infinity();
      }
    };
    const AdamResult res = adam_ascent(objective, pack.pack(params_init, Z_init), steps, lr);
    std::tie(params, Z) = pack.unpack(res.x, Z_init.Z());
  }
  const InducingSet Z_out(Z);
  const CanonicalState canon = canonical_from_data(X, y, noise_for(params), Z_out, params);
  return {Z_out, params, canonical_to_variational(canon)};
}

}  // namespace

SparseFit train_sparse(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const LikelihoodSpec& lik, const InducingSet& Z_init,
                       const KernelHyperparams& params_init, int steps, double lr,
                       bool optimize_inducing) {
  if (steps < 0) throw DimensionError("train_sparse: steps must be >= 0");
  if (lik.is_gaussian()) {
    const KernelHyperparams init = params_init.with_noise_variance(lik.sigma2());
    return fit_collapsed(X, y, nullptr, Z_init, init, steps, lr, optimize_inducing);
  }
  // Non-Gaussian: alternate Laplace-surrogate refreshes with collapsed-bound
  // ascent over the current surrogate targets.
  const int rounds = steps == 0 ? 1 : 3;
  const int chunk = steps == 0 ? 0 : (steps + rounds - 1) / rounds;
  KernelHyperparams params = params_init;
  InducingSet Z = Z_init;
  SparseFit fit{Z_init, params_init,
                VariationalState{Z_init, params_init, {}, {}}};
  for (int r = 0; r < rounds; ++r) {
    const auto [targets, noise] = laplace_surrogate_batch(params, X, y, lik);
    fit = fit_collapsed(X, targets, &noise, Z, params, chunk, lr, optimize_inducing);
    params = fit.params;
    Z = fit.Z;
    if (steps == 0) break;
  }
  return fit;
}

}  // namespace ovc
