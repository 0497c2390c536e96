#include "ovc/ovc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include "ovc/linalg.hpp"

namespace ovc {

double FantasyModel::train_cov_condition() const {
  Eigen::MatrixXd Kn = matern52_ard(gp.X, gp.X, gp.params);
  gp.noise.add_to(Kn);
  return symmetric_condition_number(Kn);
}

PseudoDataset to_pseudo_data(const VariationalState& state) {
  const CholeskyFactor Lk =
      cholesky_with_jitter(matern52_ard(state.Z.Z(), state.Z.Z(), state.params));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(state.S_bar));
  if (eig.info() != Eigen::Success) throw NumericalError("to_pseudo_data: eigen failure");
  if (eig.eigenvalues().maxCoeff() > 1.0 - 1e-14) {
    throw NumericalError(
        "to_pseudo_data: variational state at or wider than the prior cannot be "
        "expressed as pseudo-data");
  }

  // y_hat = mean + L (I - S_bar)^{-1} m_bar and
  // Sigma_yhat = L (S_bar + S_bar (I - S_bar)^{-1} S_bar) L^T
  //            = L Q diag(l / (1 - l)) Q^T L^T.
  // Both go through the spectrum of S_bar with eigenvalues clamped into
  // (0, 1); (K - S) is never inverted directly and the pseudo-noise cannot
  // come out indefinite. Barely informed directions produce huge but finite
  // noise (the divergence the representation implies).
  const Eigen::VectorXd lam =
      eig.eigenvalues().cwiseMax(1e-12).cwiseMin(1.0 - 1e-12);
  const Eigen::MatrixXd& Q = eig.eigenvectors();
  const Eigen::VectorXd inv_gap = (1.0 - lam.array()).inverse();
  PseudoDataset out;
  out.Z_prev = state.Z.Z();
  out.y_hat = (Lk.L * (Q * inv_gap.asDiagonal() * (Q.transpose() * state.m_bar))).array() +
              state.params.mean_const();
  const Eigen::VectorXd ratio = lam.array() * inv_gap.array();
  out.Sigma_yhat =
      symmetrize(Lk.L * (Q * ratio.asDiagonal() * Q.transpose()) * Lk.L.transpose());
  return out;
}

FantasyModel ovc_condition(const VariationalState& state, const Eigen::MatrixXd& X_batch,
                           const Eigen::MatrixXd& Y_batch, const NoiseModel& noise_batch) {
  const Eigen::Index nb = X_batch.rows();
  if (nb > 0 && X_batch.cols() != state.Z.dim()) {
    throw DimensionError("ovc_condition: batch dimension mismatch");
  }
  if (Y_batch.rows() != nb) throw DimensionError("ovc_condition: X/Y batch mismatch");
  if (noise_batch.size() != nb) throw DimensionError("ovc_condition: noise size mismatch");

  const PseudoDataset pseudo = to_pseudo_data(state);
  const int p = static_cast<int>(pseudo.Z_prev.rows());
  const int B = nb > 0 ? static_cast<int>(Y_batch.cols()) : 1;

  Eigen::MatrixXd X_joint(p + nb, state.Z.dim());
  X_joint.topRows(p) = pseudo.Z_prev;
  if (nb > 0) X_joint.bottomRows(nb) = X_batch;

  Eigen::MatrixXd Y_joint(p + nb, B);
  Y_joint.topRows(p) = pseudo.y_hat.replicate(1, B);
  if (nb > 0) Y_joint.bottomRows(nb) = Y_batch;

  const NoiseModel joint_noise =
      NoiseModel::block_concat(NoiseModel::dense(pseudo.Sigma_yhat), noise_batch);
  FantasyModel out{fit_exact(X_joint, Y_joint, joint_noise, state.params), p};
  return out;
}

CanonicalState stream_update(const CanonicalState& prev, const Eigen::MatrixXd& X_batch,
                             const Eigen::VectorXd& y_batch, const NoiseModel& noise_batch,
                             const InducingSet& new_Z, const KernelHyperparams& new_params) {
  // Batch contribution under the new parameterization.
  CanonicalState out = canonical_from_data(X_batch, y_batch, noise_batch, new_Z, new_params);

  // Projected carry-over of the old state:
  // c += K_uu' (K'^{-1} c'), C += K_uu' (K'^{-1} C' K'^{-1}) K_u'u.
  const CholeskyFactor L_old =
      cholesky_with_jitter(matern52_ard(prev.Z.Z(), prev.Z.Z(), prev.params));
  const Eigen::MatrixXd K_no = matern52_ard(new_Z.Z(), prev.Z.Z(), new_params);
  const Eigen::VectorXd proj_c = L_old.solve(prev.c);
  const Eigen::MatrixXd proj_C = L_old.solve(L_old.solve(prev.C).transpose());
  out.c.noalias() += K_no * proj_c;
  out.C = symmetrize(out.C + K_no * proj_C * K_no.transpose());
  return out;
}

InducingSet reselect_inducing_online(const VariationalState& state,
                                     const Eigen::MatrixXd& X_batch,
                                     const NoiseModel& noise_batch, int p) {
  const Eigen::Index nb = X_batch.rows();
  const int p_old = state.num_inducing();
  if (p < 1 || p > p_old + nb) throw DimensionError("reselect_inducing_online: bad p");

  const PseudoDataset pseudo = to_pseudo_data(state);
  Eigen::MatrixXd stacked(nb + p_old, state.Z.dim());
  if (nb > 0) stacked.topRows(nb) = X_batch;
  stacked.bottomRows(p_old) = pseudo.Z_prev;
  const NoiseModel stacked_noise =
      NoiseModel::block_concat(noise_batch, NoiseModel::dense(pseudo.Sigma_yhat));
  return select_inducing(stacked, stacked_noise, state.params, p);
}

std::pair<VariationalState, StreamDiagnostics> stream_step(
    const VariationalState& state, const Eigen::MatrixXd& X_batch,
    const Eigen::VectorXd& y_batch, const NoiseModel& noise_batch, int p,
    const InducingSet* forced_Z) {
  StreamDiagnostics diag;
  const PseudoDataset pseudo = to_pseudo_data(state);
  diag.pseudo_noise_max = pseudo.max_noise();

  // Reselect over batch + old inducing locations under the scaled kernel
  // (skipped entirely when the caller forces the inducing set).
  const InducingSet new_Z = [&]() -> InducingSet {
    if (forced_Z != nullptr) return *forced_Z;
    Eigen::MatrixXd stacked(X_batch.rows() + state.num_inducing(), state.Z.dim());
    if (X_batch.rows() > 0) stacked.topRows(X_batch.rows()) = X_batch;
    stacked.bottomRows(state.num_inducing()) = pseudo.Z_prev;
    const NoiseModel stacked_noise =
        NoiseModel::block_concat(noise_batch, NoiseModel::dense(pseudo.Sigma_yhat));
    const Eigen::MatrixXd K = matern52_ard(stacked, stacked, state.params);
    const Eigen::MatrixXd scaled = symmetrize(
        stacked_noise.inv_sqrt_apply(stacked_noise.inv_sqrt_apply(K).transpose()));
    const PivotedFactor piv =
        pivoted_cholesky(scaled, std::min<int>(p, static_cast<int>(stacked.rows())), 0.0);
    diag.residual_trace = piv.residual_trace;

    // noise scaling can let near-identical rows both survive pivoting; keep
    // the first of each pair so the inducing set stays well separated
    std::vector<int> kept;
    for (int pivot : piv.pivots) {
      bool dup = false;
      for (int c : kept) {
        if ((stacked.row(pivot) - stacked.row(c)).cwiseAbs().maxCoeff() < 1e-10) dup = true;
      }
      if (!dup) kept.push_back(pivot);
    }
    Eigen::MatrixXd Zsel(kept.size(), stacked.cols());
    for (std::size_t i = 0; i < kept.size(); ++i) Zsel.row(i) = stacked.row(kept[i]);
    return InducingSet(Zsel);
  }();

  const double sigma2 =
      noise_batch.size() > 0 ? noise_batch.mean_variance() : state.params.noise_variance();
  const auto traces = osgpr_trace_terms(state, new_Z, state.params, X_batch, sigma2);
  diag.trace1 = traces.first;
  diag.trace2 = traces.second;

  const CanonicalState prev = variational_to_canonical(state);
  const CanonicalState updated =
      stream_update(prev, X_batch, y_batch, noise_batch, new_Z, state.params);
  return {canonical_to_variational(updated), diag};
}

StateSnapshot snapshot_state(const VariationalState& state) {
  return {state.params, to_pseudo_data(state)};
}

namespace {

void write_values(std::ostream& os, const char* tag, const double* data, Eigen::Index count) {
  os << tag;
  char buf[40];
  for (Eigen::Index i = 0; i < count; ++i) {
    std::snprintf(buf, sizeof(buf), " %.17g", data[i]);
    os << buf;
  }
  os << '\n';
}

Eigen::VectorXd read_values(std::istream& is, const std::string& expected_tag,
                            Eigen::Index count) {
  std::string tag;
  if (!(is >> tag) || tag != expected_tag) {
    throw ConfigError("snapshot parse error: expected field '" + expected_tag + "'");
  }
  Eigen::VectorXd out(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    if (!(is >> out[i])) throw ConfigError("snapshot parse error in field '" + expected_tag + "'");
  }
  return out;
}

}  // namespace

void save_snapshot(std::ostream& os, const StateSnapshot& snap) {
  const int d = snap.params.input_dim();
  const int p = static_cast<int>(snap.pseudo.Z_prev.rows());
  os << "ovc-state v1\n" << "dims " << d << ' ' << p << '\n';
  const Eigen::VectorXd ls = snap.params.lengthscales();
  write_values(os, "lengthscales", ls.data(), ls.size());
  const double scalars[3] = {snap.params.outputscale(), snap.params.mean_const(),
                             snap.params.noise_variance()};
  write_values(os, "outputscale_mean_noise", scalars, 3);
  // Eigen default storage is column-major; serialize as stored.
  write_values(os, "Z_prev", snap.pseudo.Z_prev.data(), snap.pseudo.Z_prev.size());
  write_values(os, "y_hat", snap.pseudo.y_hat.data(), snap.pseudo.y_hat.size());
  write_values(os, "Sigma_yhat", snap.pseudo.Sigma_yhat.data(), snap.pseudo.Sigma_yhat.size());
}

StateSnapshot load_snapshot(std::istream& is) {
  std::string magic, version;
  if (!(is >> magic >> version) || magic != "ovc-state" || version != "v1") {
    throw ConfigError("snapshot parse error: bad header");
  }
  std::string tag;
  int d = 0, p = 0;
  if (!(is >> tag >> d >> p) || tag != "dims" || d < 1 || p < 1) {
    throw ConfigError("snapshot parse error: bad dims");
  }
  const Eigen::VectorXd ls = read_values(is, "lengthscales", d);
  const Eigen::VectorXd scalars = read_values(is, "outputscale_mean_noise", 3);
  const Eigen::VectorXd z = read_values(is, "Z_prev", static_cast<Eigen::Index>(d) * p);
  const Eigen::VectorXd yh = read_values(is, "y_hat", p);
  const Eigen::VectorXd sy = read_values(is, "Sigma_yhat", static_cast<Eigen::Index>(p) * p);

  StateSnapshot snap{KernelHyperparams(ls, scalars[0], scalars[1], scalars[2]), {}};
  snap.pseudo.Z_prev = Eigen::Map<const Eigen::MatrixXd>(z.data(), p, d);
  snap.pseudo.y_hat = yh;
  snap.pseudo.Sigma_yhat = Eigen::Map<const Eigen::MatrixXd>(sy.data(), p, p);
  return snap;
}

VariationalState state_from_snapshot(const StateSnapshot& snap) {
  // Pseudo-data is exactly a Gaussian dataset at the old inducing locations.
  const InducingSet Z(snap.pseudo.Z_prev);
  const CanonicalState canon = canonical_from_data(
      snap.pseudo.Z_prev, snap.pseudo.y_hat, NoiseModel::dense(snap.pseudo.Sigma_yhat), Z,
      snap.params);
  return canonical_to_variational(canon);
}

}  // namespace ovc
