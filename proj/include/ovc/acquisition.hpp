#pragma once

#include <Eigen/Dense>
#include <functional>
#include <variant>
#include <vector>

#include "ovc/exact_gp.hpp"
#include "ovc/likelihood.hpp"
#include "ovc/ovc.hpp"
#include "ovc/rng.hpp"
#include "ovc/sparse_gp.hpp"

namespace ovc {

/// Monte Carlo settings for acquisition estimates. Identical settings and seed
/// give bit-identical values.
struct McSettings {
  int num_samples = 256;
  bool use_low_discrepancy = true;
  std::uint64_t seed = 0;
};

/// Look-ahead Thompson sampling configuration.
struct LtsConfig {
  int horizon = 0;             // rollout steps T
  int paths = 1;               // parallel paths l
  int candidates_per_step = 128;
  int batch_q = 1;
  std::uint64_t seed = 0;
};

struct Bounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int dim() const { return static_cast<int>(lower.size()); }
};

/// A surrogate is either an exact GP or a sparse variational state; both
/// support posterior evaluation and fantasy conditioning (the sparse one via
/// online variational conditioning into an exact GP).
using Surrogate = std::variant<ExactGpModel, VariationalState>;

PosteriorGaussian surrogate_posterior(const Surrogate& model, const Eigen::MatrixXd& X,
                                      bool full_cov = true);
const KernelHyperparams& surrogate_params(const Surrogate& model);
/// Training inputs (exact) or inducing locations (sparse); used for reference
/// sets and baseline pruning.
Eigen::MatrixXd surrogate_anchor_points(const Surrogate& model);
/// Conditions on (X, Y) with the given noise; Y columns form a fantasy batch.
ExactGpModel surrogate_fantasize(const Surrogate& model, const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd& Y, const NoiseModel& noise);

/// Low-discrepancy (or plain seeded) standard-normal base samples, n x dims.
Eigen::MatrixXd mc_normal_samples(int n, int dims, const McSettings& mc);

/// Analytic single-point expected improvement over best_f.
double expected_improvement(const Surrogate& model, const Eigen::RowVectorXd& x, double best_f);

/// Monte Carlo batch expected improvement over a known incumbent value.
double qei(const Surrogate& model, const Eigen::MatrixXd& X_query, double best_f,
           const McSettings& mc);

/// Monte Carlo batch noisy expected improvement: improvement of the query
/// batch over the sampled baseline maximum under joint posterior draws. The
/// baseline is pruned to the highest-mean points to keep the joint draw small.
double qnei(const Surrogate& model, const Eigen::MatrixXd& X_query,
            const Eigen::MatrixXd& X_baseline, const McSettings& mc);

/// Max posterior mean over the anchor points plus 128 low-discrepancy points:
/// the reference term of the knowledge gradient.
double qkg_reference_max(const Surrogate& model, const Bounds& bounds, std::uint64_t seed);

/// One-shot batch knowledge gradient value: fantasy models at X_query
/// (optionally through a non-Gaussian likelihood and its Laplace surrogate),
/// posterior mean at the paired solution points, minus reference_max.
double qkg_one_shot(const Surrogate& model, const LikelihoodSpec& lik,
                    const Eigen::MatrixXd& X_query, const Eigen::MatrixXd& X_solutions,
                    const McSettings& mc, double reference_max);

/// Posterior means of every fantasy model at every eval point
/// (num_samples x |X_eval|); the fantasy draw matches qkg_one_shot for equal
/// settings. Exposed for discrete-candidate knowledge-gradient evaluation.
Eigen::MatrixXd qkg_fantasy_means(const Surrogate& model, const LikelihoodSpec& lik,
                                  const Eigen::MatrixXd& X_query,
                                  const Eigen::MatrixXd& X_eval, const McSettings& mc);

struct QkgOptions {
  int q = 1;
  int fantasies = 64;
  int restarts = 2;
  int raw_samples = 64;
  int rounds = 5;       // alternating outer rounds
  std::uint64_t seed = 0;
  /// Optional multiplicative weight on the (nonnegative part of the) value,
  /// e.g. a probability of feasibility for constrained problems.
  std::function<double(const Eigen::MatrixXd&)> batch_weight;
};

/// Alternating one-shot optimization of qKG: inner per-fantasy solution
/// maximization alternates with projected ascent over the query batch.
/// Returns the q x d query batch.
Eigen::MatrixXd optimize_qkg(const Surrogate& model, const LikelihoodSpec& lik,
                             const Bounds& bounds, const QkgOptions& opts);

/// Negative integrated posterior variance after conditioning on X_query with
/// the model's Gaussian noise (the conditioned variance does not depend on
/// the fantasy targets). Empty query scores the current variance.
double nipv(const Surrogate& model, const Eigen::MatrixXd& X_query,
            const Eigen::MatrixXd& integration_grid);

/// Per-point hotspot entropies: Monte Carlo estimate of the
/// indicator-weighted Bernoulli entropy of exceeding logit(tau).
Eigen::VectorXd hotspot_entropy(const Surrogate& model, const Eigen::MatrixXd& X_eval,
                                double tau, int num_samples, std::uint64_t seed);

/// Expected change of the summed hotspot-classification entropy
/// H(Bernoulli(P(f > logit tau))) over X_eval after observing a Binomial
/// response at X_query (negative values mean entropy reduction; select by
/// argmin). K_outer fantasy observations, K_inner exceedance samples.
double hotspot_acquisition(const Surrogate& model, const Eigen::MatrixXd& X_query,
                           const Eigen::VectorXi& query_trials, const Eigen::MatrixXd& X_eval,
                           double tau, int K_inner, int K_outer, std::uint64_t seed);

/// Standard batch Thompson sampling: q sequential joint draws over the
/// candidate set, each contributing its best not-yet-chosen candidate.
/// Returns the q x d batch in draw order.
Eigen::MatrixXd thompson_select(const Surrogate& model, const Eigen::MatrixXd& candidates,
                                int q, std::uint64_t seed);

/// Scrambled low-discrepancy candidate set over the box; the same stream the
/// rollout stages of lts() consume.
Eigen::MatrixXd candidate_set(const Bounds& bounds, int n, std::uint64_t seed);

/// Rollout instrumentation: per-path fantasy points/values, the jointly
/// conditioned per-path models, and their training-covariance condition
/// numbers.
struct LtsTrace {
  std::vector<Eigen::MatrixXd> path_X;
  std::vector<Eigen::VectorXd> path_y;
  std::vector<ExactGpModel> path_models;
  std::vector<double> condition_numbers;
};

/// Look-ahead Thompson sampling (rollout paths conditioned step by step via
/// OVC, joint re-conditioning on whole paths, final Thompson selection).
/// horizon = 0 reduces bit-exactly to thompson_select on the same candidate
/// stream (candidate_set with the config seed).
Eigen::MatrixXd lts(const Surrogate& model, const Bounds& bounds, const LtsConfig& config,
                    LtsTrace* trace = nullptr);

struct OptimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  bool refined = false;  // false: every restart failed, best raw point returned
};

/// Multi-start maximization of a black-box acquisition over a box:
/// raw_samples low-discrepancy candidates scored, the best `restarts` refined
/// by quasi-Newton ascent with finite-difference gradients.
OptimizeResult optimize_acquisition(const std::function<double(const Eigen::VectorXd&)>& acq,
                                    const Bounds& bounds, int restarts, int raw_samples,
                                    std::uint64_t seed);

}  // namespace ovc
