#include "ovc/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ovc/linalg.hpp"
#include "ovc/optim.hpp"

namespace ovc {

namespace {

constexpr int kMaxQmcDims = 32;  // prime table limit for the Halton generator

double logit(double p) { return std::log(p / (1.0 - p)); }

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double bernoulli_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

/// Lower Cholesky root of a posterior covariance, tolerant of degenerate
/// (near-zero) posteriors.
Eigen::MatrixXd posterior_root(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(cov));
  const Eigen::VectorXd d = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * d.asDiagonal();
}

Eigen::MatrixXd vstack(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() + b.rows(), a.cols() > 0 ? a.cols() : b.cols());
  if (a.rows() > 0) out.topRows(a.rows()) = a;
  if (b.rows() > 0) out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace

PosteriorGaussian surrogate_posterior(const Surrogate& model, const Eigen::MatrixXd& X,
                                      bool full_cov) {
  if (const auto* gp = std::get_if<ExactGpModel>(&model)) return predict(*gp, X, full_cov);
  return sgpr_predict(std::get<VariationalState>(model), X, full_cov);
}

const KernelHyperparams& surrogate_params(const Surrogate& model) {
  if (const auto* gp = std::get_if<ExactGpModel>(&model)) return gp->params;
  return std::get<VariationalState>(model).params;
}

Eigen::MatrixXd surrogate_anchor_points(const Surrogate& model) {
  if (const auto* gp = std::get_if<ExactGpModel>(&model)) return gp->X;
  return std::get<VariationalState>(model).Z.Z();
}

ExactGpModel surrogate_fantasize(const Surrogate& model, const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd& Y, const NoiseModel& noise) {
  if (const auto* gp = std::get_if<ExactGpModel>(&model)) {
    ExactGpModel base = *gp;
    if (Y.cols() != base.Y.cols()) {
      // broadcast a single-column model across the fantasy batch; the caches
      // replicate without refactorization
      if (base.Y.cols() != 1) {
        throw DimensionError("surrogate_fantasize: fantasy batch width mismatch");
      }
      base.Y = base.Y.col(0).replicate(1, Y.cols()).eval();
      base.cache_A = base.cache_A.col(0).replicate(1, Y.cols()).eval();
    }
    return condition_exact(base, X, Y, noise);
  }
  return ovc_condition(std::get<VariationalState>(model), X, Y, noise).gp;
}

Eigen::MatrixXd mc_normal_samples(int n, int dims, const McSettings& mc) {
  Eigen::MatrixXd Z(n, dims);
  if (mc.use_low_discrepancy && dims <= kMaxQmcDims) {
    HaltonSampler halton(dims, mc.seed);
    const Eigen::MatrixXd U = halton.next(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < dims; ++j) {
        Z(i, j) = norm_inv_cdf(std::clamp(U(i, j), 1e-12, 1.0 - 1e-12));
      }
    }
  } else {
    Rng rng(mc.seed ^ 0x5bd1e995u);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < dims; ++j) Z(i, j) = rng.normal();
    }
  }
  return Z;
}

double expected_improvement(const Surrogate& model, const Eigen::RowVectorXd& x, double best_f) {
  const PosteriorGaussian post = surrogate_posterior(model, x, false);
  const double mu = post.mean(0, 0);
  const double sd = std::sqrt(std::max(post.variance[0], 0.0));
  if (sd < 1e-12) return std::max(mu - best_f, 0.0);
  const double z = (mu - best_f) / sd;
  return (mu - best_f) * norm_cdf(z) + sd * norm_pdf(z);
}

double qei(const Surrogate& model, const Eigen::MatrixXd& X_query, double best_f,
           const McSettings& mc) {
  const int q = static_cast<int>(X_query.rows());
  const PosteriorGaussian post = surrogate_posterior(model, X_query, true);
  const Eigen::MatrixXd root = posterior_root(post.covariance);
  const Eigen::MatrixXd Z = mc_normal_samples(mc.num_samples, q, mc);
  double acc = 0.0;
  for (int s = 0; s < mc.num_samples; ++s) {
    const Eigen::VectorXd f = post.mean.col(0) + root * Z.row(s).transpose();
    acc += std::max(f.maxCoeff() - best_f, 0.0);
  }
  return acc / mc.num_samples;
}

double qnei(const Surrogate& model, const Eigen::MatrixXd& X_query,
            const Eigen::MatrixXd& X_baseline, const McSettings& mc) {
  if (X_baseline.rows() == 0) throw DimensionError("qnei: baseline must be nonempty");
  const int q = static_cast<int>(X_query.rows());
  // prune the baseline to its highest-mean points so the joint draw stays small
  Eigen::MatrixXd baseline = X_baseline;
  const int max_baseline = kMaxQmcDims - q;
  if (baseline.rows() > max_baseline) {
    const PosteriorGaussian bm = surrogate_posterior(model, baseline, false);
    std::vector<int> idx(baseline.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return bm.mean(a, 0) > bm.mean(b, 0); });
    Eigen::MatrixXd pruned(max_baseline, baseline.cols());
    for (int i = 0; i < max_baseline; ++i) pruned.row(i) = baseline.row(idx[i]);
    baseline = pruned;
  }
  const int nb = static_cast<int>(baseline.rows());
  const Eigen::MatrixXd Xall = vstack(X_query, baseline);
  const PosteriorGaussian post = surrogate_posterior(model, Xall, true);
  const Eigen::MatrixXd root = posterior_root(post.covariance);
  const Eigen::MatrixXd Z = mc_normal_samples(mc.num_samples, q + nb, mc);
  double acc = 0.0;
  for (int s = 0; s < mc.num_samples; ++s) {
    const Eigen::VectorXd f = post.mean.col(0) + root * Z.row(s).transpose();
    const double query_max = f.head(q).maxCoeff();
    const double base_max = nb > 0 ? f.tail(nb).maxCoeff() : -std::numeric_limits<double>::infinity();
    acc += std::max(query_max - base_max, 0.0);
  }
  return acc / mc.num_samples;
}

namespace {

std::pair<double, Eigen::RowVectorXd> reference_max_point(const Surrogate& model,
                                                          const Bounds& bounds,
                                                          std::uint64_t seed) {
  HaltonSampler halton(bounds.dim(), seed ^ 0xda3e39cb94b95bdbULL);
  const Eigen::MatrixXd extra = halton.next_in_box(128, bounds.lower, bounds.upper);
  const Eigen::MatrixXd pts = vstack(surrogate_anchor_points(model), extra);
  const PosteriorGaussian post = surrogate_posterior(model, pts, false);
  Eigen::Index best;
  const double value = post.mean.col(0).maxCoeff(&best);
  return {value, pts.row(best)};
}

}  // namespace

double qkg_reference_max(const Surrogate& model, const Bounds& bounds, std::uint64_t seed) {
  return reference_max_point(model, bounds, seed).first;
}

ExactGpModel fantasy_base(const Surrogate& model) {
  if (const auto* gp = std::get_if<ExactGpModel>(&model)) return *gp;
  return ovc_condition(std::get<VariationalState>(model), Eigen::MatrixXd(0, 0),
                       Eigen::MatrixXd(0, 0), NoiseModel::empty())
      .gp;
}

namespace {

/// Fantasy ensemble at X_query: a single column-batched model for Gaussian
/// noise, per-fantasy models when a Laplace surrogate intervenes.
struct FantasyEnsemble {
  std::vector<ExactGpModel> models;  // size 1 when batched
  int fantasies = 0;

  double mean_at(int fantasy, const Eigen::RowVectorXd& x) const {
    if (models.size() == 1) return predict(models[0], x, false).mean(0, fantasy);
    return predict(models[fantasy], x, false).mean(0, 0);
  }
};

/// Likelihood curvature W(f) = -d^2 log p / df^2 for the natural exponential
/// families; depends on f only, never on y.
double likelihood_curvature(const LikelihoodSpec& lik, int i, double f) {
  switch (lik.family()) {
    case LikelihoodSpec::Family::Gaussian:
      return 1.0 / lik.sigma2();
    case LikelihoodSpec::Family::Poisson:
      return std::exp(std::clamp(f, -30.0, 30.0));
    case LikelihoodSpec::Family::Bernoulli: {
      const double p = sigmoid(f);
      return std::max(p * (1.0 - p), 1e-6);
    }
    case LikelihoodSpec::Family::Binomial: {
      const double p = sigmoid(f);
      return std::max(lik.trials()[i] * p * (1.0 - p), 1e-6);
    }
  }
  return 1.0;
}

/// Conditions the precomputed base on fantasy draws at X_query. The base
/// carries the heavy factorization (pseudo-data for sparse states), so each
/// fantasy costs only a low-rank block update.
///
/// Non-Gaussian fantasies come in two flavors: latent draws conditioned with
/// the likelihood-curvature noise 1/W(f) (smooth in X_query, used inside
/// gradient-based acquisition optimization), and sampled observations pushed
/// through the Laplace surrogate (used where candidates are enumerated).
FantasyEnsemble make_fantasies(const ExactGpModel& base, const LikelihoodSpec& lik,
                               const Eigen::MatrixXd& X_query, int fantasies,
                               const McSettings& mc, bool latent_fantasies = true) {
  const int q = static_cast<int>(X_query.rows());
  const KernelHyperparams& params = base.params;
  const PosteriorGaussian post = predict(base, X_query, true);
  const Eigen::MatrixXd root = posterior_root(post.covariance);
  const Eigen::MatrixXd Z = mc_normal_samples(fantasies, q, mc);

  FantasyEnsemble out;
  out.fantasies = fantasies;
  if (lik.is_gaussian()) {
    // fantasy observations from the posterior predictive (noise included)
    const double s2 = lik.sigma2();
    Eigen::MatrixXd cov_y = post.covariance;
    cov_y.diagonal().array() += s2;
    const Eigen::MatrixXd root_y = posterior_root(cov_y);
    Eigen::MatrixXd Y(q, fantasies);
    for (int s = 0; s < fantasies; ++s) {
      Y.col(s) = post.mean.col(0) + root_y * Z.row(s).transpose();
    }
    ExactGpModel wide = base;
    wide.Y = base.Y.col(0).replicate(1, fantasies).eval();
    wide.cache_A = base.cache_A.col(0).replicate(1, fantasies).eval();
    out.models.push_back(condition_exact(wide, X_query, Y, NoiseModel::homoskedastic(s2, q)));
    return out;
  }

  Rng rng(mc.seed ^ 0x9e3779b9ULL);
  out.models.reserve(fantasies);
  for (int s = 0; s < fantasies; ++s) {
    const Eigen::VectorXd f = post.mean.col(0) + root * Z.row(s).transpose();
    if (latent_fantasies) {
      Eigen::VectorXd vars(q);
      for (int i = 0; i < q; ++i) vars[i] = 1.0 / likelihood_curvature(lik, i, f[i]);
      out.models.push_back(condition_exact(base, X_query, f, NoiseModel::diagonal(vars)));
      continue;
    }
    // sampled observations through the Laplace surrogate
    Eigen::VectorXd y(q);
    for (int i = 0; i < q; ++i) {
      switch (lik.family()) {
        case LikelihoodSpec::Family::Poisson:
          y[i] = rng.poisson(std::exp(std::min(f[i], 20.0)));
          break;
        case LikelihoodSpec::Family::Bernoulli:
          y[i] = rng.uniform() < sigmoid(f[i]) ? 1.0 : 0.0;
          break;
        case LikelihoodSpec::Family::Binomial: {
          const int n = lik.trials()[i];
          int hits = 0;
          const double p = sigmoid(f[i]);
          for (int t = 0; t < n; ++t) hits += rng.uniform() < p ? 1 : 0;
          y[i] = hits;
          break;
        }
        default:
          throw NumericalError("make_fantasies: unsupported likelihood");
      }
    }
    const auto [targets, noise] = laplace_surrogate_batch(params, X_query, y, lik);
    out.models.push_back(condition_exact(base, X_query, targets, noise));
  }
  return out;
}

FantasyEnsemble make_fantasies(const Surrogate& model, const LikelihoodSpec& lik,
                               const Eigen::MatrixXd& X_query, int fantasies,
                               const McSettings& mc, bool latent_fantasies = true) {
  return make_fantasies(fantasy_base(model), lik, X_query, fantasies, mc, latent_fantasies);
}

}  // namespace

double qkg_one_shot(const Surrogate& model, const LikelihoodSpec& lik,
                    const Eigen::MatrixXd& X_query, const Eigen::MatrixXd& X_solutions,
                    const McSettings& mc, double reference_max) {
  const int F = static_cast<int>(X_solutions.rows());
  const FantasyEnsemble ens = make_fantasies(model, lik, X_query, F, mc);
  double acc = 0.0;
  for (int s = 0; s < F; ++s) acc += ens.mean_at(s, X_solutions.row(s));
  return acc / F - reference_max;
}

Eigen::MatrixXd qkg_fantasy_means(const Surrogate& model, const LikelihoodSpec& lik,
                                  const Eigen::MatrixXd& X_query,
                                  const Eigen::MatrixXd& X_eval, const McSettings& mc) {
  const FantasyEnsemble ens = make_fantasies(model, lik, X_query, mc.num_samples, mc);
  Eigen::MatrixXd out(mc.num_samples, X_eval.rows());
  if (ens.models.size() == 1) {
    const PosteriorGaussian post = predict(ens.models[0], X_eval, false);
    out = post.mean.transpose();
  } else {
    for (int s = 0; s < mc.num_samples; ++s) {
      out.row(s) = predict(ens.models[s], X_eval, false).mean.col(0).transpose();
    }
  }
  return out;
}

Eigen::MatrixXd optimize_qkg(const Surrogate& model, const LikelihoodSpec& lik,
                             const Bounds& bounds, const QkgOptions& opts) {
  const int d = bounds.dim();
  const int q = opts.q;
  const int F = opts.fantasies;
  const McSettings mc{F, true, opts.seed};
  const auto [ref, ref_point] = reference_max_point(model, bounds, opts.seed);
  // the heavy part of conditioning is shared by every fantasy and every
  // query-batch evaluation
  const ExactGpModel base = fantasy_base(model);
  const auto qkg_value = [&](const Eigen::MatrixXd& Q, const Eigen::MatrixXd& sols) {
    const FantasyEnsemble ens = make_fantasies(base, lik, Q, F, mc);
    double acc = 0.0;
    for (int s = 0; s < F; ++s) acc += ens.mean_at(s, sols.row(s));
    return acc / F - ref;
  };

  HaltonSampler raw(d, opts.seed ^ 0xc2b2ae3d27d4eb4fULL);
  // score raw q-batches by a cheap qEI-style proxy to pick restart starts
  const Eigen::MatrixXd raw_pts = raw.next_in_box(opts.raw_samples * q, bounds.lower,
                                                  bounds.upper);
  std::vector<std::pair<double, int>> scored(opts.raw_samples);
  const double best_mean = ref;
  for (int r = 0; r < opts.raw_samples; ++r) {
    const Eigen::MatrixXd batch = raw_pts.middleRows(r * q, q);
    scored[r] = {qei(model, batch, best_mean, McSettings{32, true, opts.seed ^ 17u}), r};
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  Eigen::MatrixXd best_query;
  double best_value = -std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < std::min(opts.restarts, opts.raw_samples); ++restart) {
    Eigen::MatrixXd Xq = raw_pts.middleRows(scored[restart].second * q, q);
    Rng jitter(opts.seed ^ (0xada55ULL + restart));
    if (restart == 0) {
      // one restart polishes the incumbent basin: the query batch starts
      // jittered around the posterior-mean maximizer
      for (int k = 0; k < q; ++k) {
        for (int j = 0; j < d; ++j) {
          const double span = bounds.upper[j] - bounds.lower[j];
          Xq(k, j) = std::clamp(ref_point[j] + 0.1 * span * jitter.normal(), bounds.lower[j],
                                bounds.upper[j]);
        }
      }
    }
    // half the fantasy solutions start jittered around the incumbent
    // posterior-mean maximizer, half explore via the low-discrepancy stream
    HaltonSampler sol_init(d, opts.seed ^ (0x7f4a7c15ULL + restart));
    Eigen::MatrixXd Xs = sol_init.next_in_box(F, bounds.lower, bounds.upper);
    for (int s = 0; s < F / 2; ++s) {
      for (int j = 0; j < d; ++j) {
        const double span = bounds.upper[j] - bounds.lower[j];
        Xs(s, j) = std::clamp(ref_point[j] + 0.05 * span * jitter.normal(), bounds.lower[j],
                              bounds.upper[j]);
      }
    }

    double value = -std::numeric_limits<double>::infinity();
    for (int round = 0; round < opts.rounds; ++round) {
      // inner step: maximize each fantasy's posterior mean over its solution
      const FantasyEnsemble ens = make_fantasies(base, lik, Xq, F, mc);
      for (int s = 0; s < F; ++s) {
        const auto mean_s = [&](const Eigen::VectorXd& x) {
          return ens.mean_at(s, x.transpose());
        };
        const BoxOptimResult res =
            box_ascent(mean_s, Xs.row(s).transpose(), bounds.lower, bounds.upper, 20);
        Xs.row(s) = res.x.transpose();
      }

      // outer step: ascend the query batch with the solutions held fixed
      const auto value_at = [&](const Eigen::VectorXd& flat) {
        const Eigen::MatrixXd Q =
            Eigen::Map<const Eigen::MatrixXd>(flat.data(), q, d);
        double v = qkg_value(Q, Xs);
        if (opts.batch_weight && v > 0.0) v *= opts.batch_weight(Q);
        return v;
      };
      // flattened column-major layout: coordinate j of every batch row sits in
      // the j-th block of q entries
      Eigen::VectorXd flat_lo(q * d), flat_hi(q * d);
      for (int j = 0; j < d; ++j) {
        flat_lo.segment(j * q, q).setConstant(bounds.lower[j]);
        flat_hi.segment(j * q, q).setConstant(bounds.upper[j]);
      }
      const Eigen::VectorXd flat0 = Eigen::Map<const Eigen::VectorXd>(Xq.data(), q * d);
      const BoxOptimResult step = box_ascent(value_at, flat0, flat_lo, flat_hi, 15, 1e-4);
      Xq = Eigen::Map<const Eigen::MatrixXd>(step.x.data(), q, d);
      value = step.value;
    }
    if (value > best_value) {
      best_value = value;
      best_query = Xq;
    }
  }
  return best_query;
}

double nipv(const Surrogate& model, const Eigen::MatrixXd& X_query,
            const Eigen::MatrixXd& integration_grid) {
  if (X_query.rows() == 0) {
    const PosteriorGaussian now = surrogate_posterior(model, integration_grid, false);
    return -now.variance.mean();
  }
  const int q = static_cast<int>(X_query.rows());
  const double s2 = surrogate_params(model).noise_variance();
  // Gaussian conditioning: the look-ahead variance is independent of the
  // fantasy targets, so condition once on the posterior mean.
  const PosteriorGaussian at_q = surrogate_posterior(model, X_query, false);
  const ExactGpModel fant = surrogate_fantasize(model, X_query, at_q.mean.col(0),
                                                NoiseModel::homoskedastic(s2, q));
  const PosteriorGaussian after = predict(fant, integration_grid, false);
  return -after.variance.mean();
}

Eigen::VectorXd hotspot_entropy(const Surrogate& model, const Eigen::MatrixXd& X_eval,
                                double tau, int num_samples, std::uint64_t seed) {
  if (!(tau > 0.0 && tau < 1.0)) throw DimensionError("hotspot_entropy: tau outside (0,1)");
  const double threshold = logit(tau);
  const PosteriorGaussian post = surrogate_posterior(model, X_eval, false);
  Rng rng(seed ^ 0x2545f4914f6cdd1dULL);
  Eigen::VectorXd h(X_eval.rows());
  for (Eigen::Index i = 0; i < X_eval.rows(); ++i) {
    const double mu = post.mean(i, 0);
    const double sd = std::sqrt(std::max(post.variance[i], 0.0));
    double acc = 0.0;
    for (int s = 0; s < num_samples; ++s) {
      const double f = mu + sd * rng.normal();
      if (f > threshold) acc += bernoulli_entropy(sigmoid(f));
    }
    h[i] = acc / num_samples;
  }
  return h;
}

namespace {

/// Summed entropy of the hotspot classification over the eval set:
/// sum_x H(Bernoulli(P(f(x) > logit tau))), with the exceedance probability
/// estimated from num_samples posterior draws.
double classification_entropy_sum(const Surrogate& model, const Eigen::MatrixXd& X_eval,
                                  double tau, int num_samples, std::uint64_t seed) {
  const double threshold = logit(tau);
  const PosteriorGaussian post = surrogate_posterior(model, X_eval, false);
  Rng rng(seed ^ 0x2545f4914f6cdd1dULL);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < X_eval.rows(); ++i) {
    const double mu = post.mean(i, 0);
    const double sd = std::sqrt(std::max(post.variance[i], 0.0));
    int above = 0;
    for (int s = 0; s < num_samples; ++s) {
      if (mu + sd * rng.normal() > threshold) ++above;
    }
    acc += bernoulli_entropy(static_cast<double>(above) / num_samples);
  }
  return acc;
}

}  // namespace

double hotspot_acquisition(const Surrogate& model, const Eigen::MatrixXd& X_query,
                           const Eigen::VectorXi& query_trials, const Eigen::MatrixXd& X_eval,
                           double tau, int K_inner, int K_outer, std::uint64_t seed) {
  const int q = static_cast<int>(X_query.rows());
  if (query_trials.size() != q) throw DimensionError("hotspot_acquisition: trials mismatch");
  const LikelihoodSpec lik = LikelihoodSpec::binomial(query_trials);
  // The acquisition scores the expected change of the hotspot-classification
  // entropy H(Bernoulli(P(f > logit tau))) over the eval set; observing an
  // informative site makes the classification confident and drives it down.
  // Common random numbers across before/after keep the inner Monte Carlo
  // noise out of the difference.
  const double base = classification_entropy_sum(model, X_eval, tau, K_inner, seed);

  double acc = 0.0;
  for (int j = 0; j < K_outer; ++j) {
    const McSettings mc{1, false, seed + 7919u * static_cast<std::uint64_t>(j + 1)};
    const FantasyEnsemble ens =
        make_fantasies(model, lik, X_query, 1, mc, /*latent_fantasies=*/false);
    const Surrogate fant = ens.models[0];
    acc += classification_entropy_sum(fant, X_eval, tau, K_inner, seed) - base;
  }
  return acc / K_outer;
}

namespace {

/// One Thompson draw over the candidate set; returns the best index not
/// already taken.
int thompson_draw(const Eigen::VectorXd& mean, const Eigen::MatrixXd& root, Rng& rng,
                  const std::vector<bool>& taken) {
  Eigen::VectorXd z(root.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  const Eigen::VectorXd f = mean + root * z;
  int best = -1;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (taken[i]) continue;
    if (best < 0 || f[i] > f[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace

Eigen::MatrixXd thompson_select(const Surrogate& model, const Eigen::MatrixXd& candidates,
                                int q, std::uint64_t seed) {
  if (q < 1 || q > candidates.rows()) throw DimensionError("thompson_select: bad q");
  const PosteriorGaussian post = surrogate_posterior(model, candidates, true);
  const Eigen::MatrixXd root = posterior_root(post.covariance);
  Rng rng(seed ^ 0x94d049bb133111ebULL);
  std::vector<bool> taken(candidates.rows(), false);
  Eigen::MatrixXd out(q, candidates.cols());
  for (int k = 0; k < q; ++k) {
    const int pick = thompson_draw(post.mean.col(0), root, rng, taken);
    taken[pick] = true;
    out.row(k) = candidates.row(pick);
  }
  return out;
}

Eigen::MatrixXd candidate_set(const Bounds& bounds, int n, std::uint64_t seed) {
  HaltonSampler gen(bounds.dim(), seed ^ 0x8d2f9c1aULL);
  return gen.next_in_box(n, bounds.lower, bounds.upper);
}

Eigen::MatrixXd lts(const Surrogate& model, const Bounds& bounds, const LtsConfig& config,
                    LtsTrace* trace) {
  const int d = bounds.dim();
  const int l = config.paths;
  const double s2 = surrogate_params(model).noise_variance();
  // one continuing low-discrepancy stream across all rollout stages; its
  // first block coincides with candidate_set(bounds, n, seed)
  HaltonSampler gen(d, config.seed ^ 0x8d2f9c1aULL);

  if (config.horizon == 0) {
    // degenerate case: plain Thompson selection over one candidate set
    const Eigen::MatrixXd cands =
        gen.next_in_box(config.candidates_per_step, bounds.lower, bounds.upper);
    return thompson_select(model, cands, config.batch_q, config.seed);
  }

  struct Path {
    Eigen::MatrixXd X;  // t x d
    Eigen::VectorXd y;
    ExactGpModel gp;
    bool alive;
  };

  // step 1-4: initial Thompson draw, keep the top-l samples as path seeds
  Rng rng(config.seed ^ 0x94d049bb133111ebULL);
  const Eigen::MatrixXd X1 =
      gen.next_in_box(config.candidates_per_step, bounds.lower, bounds.upper);
  const PosteriorGaussian p1 = surrogate_posterior(model, X1, true);
  const Eigen::MatrixXd root1 = posterior_root(p1.covariance);
  Eigen::VectorXd z1(X1.rows());
  for (Eigen::Index i = 0; i < z1.size(); ++i) z1[i] = rng.normal();
  const Eigen::VectorXd f1 = p1.mean.col(0) + root1 * z1;
  std::vector<int> order(X1.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return f1[a] > f1[b]; });

  std::vector<Path> paths;
  paths.reserve(l);
  for (int i = 0; i < l; ++i) {
    const Eigen::MatrixXd x0 = X1.row(order[i]);
    const Eigen::VectorXd y0 = Eigen::VectorXd::Constant(1, f1[order[i]]);
    paths.push_back(Path{
        x0, y0, surrogate_fantasize(model, x0, y0, NoiseModel::homoskedastic(s2, 1)), true});
  }

  // steps 5-8: extend each path with its own Thompson draw per round
  for (int t = 1; t < config.horizon; ++t) {
    const Eigen::MatrixXd Xt =
        gen.next_in_box(config.candidates_per_step, bounds.lower, bounds.upper);
    for (Path& path : paths) {
      if (!path.alive) continue;
      try {
        const PosteriorGaussian pt = predict(path.gp, Xt, true);
        const Eigen::MatrixXd root = posterior_root(pt.covariance);
        Eigen::VectorXd z(Xt.rows());
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
        const Eigen::VectorXd f = pt.mean.col(0) + root * z;
        Eigen::Index best;
        f.maxCoeff(&best);
        const Eigen::MatrixXd xb = Xt.row(best);
        const Eigen::VectorXd yb = Eigen::VectorXd::Constant(1, f[best]);
        path.gp = condition_exact(path.gp, xb, yb, NoiseModel::homoskedastic(s2, 1));
        path.X = vstack(path.X, xb);
        path.y.conservativeResize(path.y.size() + 1);
        path.y[path.y.size() - 1] = f[best];
      } catch (const NumericalError&) {
        path.alive = false;
      }
    }
  }

  // step 9: condition the original surrogate jointly on each full path,
  // reusing the per-step fantasy noise
  int alive = 0;
  for (Path& path : paths) {
    if (!path.alive) continue;
    try {
      const ExactGpModel joint = surrogate_fantasize(
          model, path.X, path.y,
          NoiseModel::homoskedastic(s2, static_cast<int>(path.X.rows())));
      path.gp = joint;
      ++alive;
      if (trace != nullptr) {
        trace->path_X.push_back(path.X);
        trace->path_y.push_back(path.y);
        trace->path_models.push_back(joint);
        Eigen::MatrixXd Kn = matern52_ard(joint.X, joint.X, joint.params);
        joint.noise.add_to(Kn);
        trace->condition_numbers.push_back(symmetric_condition_number(Kn));
      }
    } catch (const NumericalError&) {
      path.alive = false;
    }
  }
  if (alive == 0) throw NumericalError("lts: every rollout path failed to condition");

  // steps 10-11: final Thompson selection, one draw per surviving path
  const Eigen::MatrixXd X_end =
      gen.next_in_box(config.candidates_per_step, bounds.lower, bounds.upper);
  std::vector<std::pair<double, int>> picks;  // (sampled value, candidate row)
  std::vector<bool> taken(X_end.rows(), false);
  int path_idx = 0;
  for (int k = 0; k < config.batch_q; ++k) {
    // cycle over surviving paths when q exceeds the path count
    while (!paths[path_idx % l].alive) ++path_idx;
    const Path& path = paths[path_idx % l];
    ++path_idx;
    const PosteriorGaussian pe = predict(path.gp, X_end, true);
    const Eigen::MatrixXd root = posterior_root(pe.covariance);
    const int pick = thompson_draw(pe.mean.col(0), root, rng, taken);
    taken[pick] = true;
    picks.push_back({pe.mean(pick, 0), pick});
  }
  Eigen::MatrixXd out(config.batch_q, d);
  for (int k = 0; k < config.batch_q; ++k) out.row(k) = X_end.row(picks[k].second);
  return out;
}

OptimizeResult optimize_acquisition(const std::function<double(const Eigen::VectorXd&)>& acq,
                                    const Bounds& bounds, int restarts, int raw_samples,
                                    std::uint64_t seed) {
  if (!bounds.lower.allFinite() || !bounds.upper.allFinite()) {
    throw DimensionError("optimize_acquisition: bounds must be finite");
  }
  HaltonSampler halton(bounds.dim(), seed ^ 0xb5297a4dULL);
  const Eigen::MatrixXd raw = halton.next_in_box(raw_samples, bounds.lower, bounds.upper);
  std::vector<std::pair<double, int>> scored(raw_samples);
  for (int i = 0; i < raw_samples; ++i) {
    const double v = acq(raw.row(i).transpose());
    scored[i] = {std::isfinite(v) ? v : -std::numeric_limits<double>::infinity(), i};
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  OptimizeResult best{raw.row(scored[0].second).transpose(), scored[0].first, false};
  for (int r = 0; r < std::min(restarts, raw_samples); ++r) {
    const BoxOptimResult res = box_ascent(acq, raw.row(scored[r].second).transpose(),
                                          bounds.lower, bounds.upper, 60);
    if (std::isfinite(res.value) && res.value >= best.value) {
      best = {res.x, res.value, true};
    }
  }
  return best;
}

}  // namespace ovc
