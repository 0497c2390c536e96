#include "ovc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>

#include "ovc/acquisition.hpp"
#include "ovc/objectives.hpp"
#include "ovc/optim.hpp"
#include "ovc/ovc.hpp"

namespace ovc {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config and writers
// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config parse error at line " + std::to_string(lineno) +
                        ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config parse error: empty key");
    cfg.kv_[key] = value;
  }
  return cfg;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

bool ExperimentConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string ExperimentConfig::str(const std::string& key, const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double ExperimentConfig::num(const std::string& key, double fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config value for '" + key + "' is not a number: " + it->second);
  }
}

int ExperimentConfig::integer(const std::string& key, int fallback) const {
  const double v = num(key, fallback);
  if (v != std::floor(v)) throw ConfigError("config value for '" + key + "' is not an integer");
  return static_cast<int>(v);
}

bool ExperimentConfig::flag(const std::string& key, bool fallback) const {
  const std::string v = str(key, fallback ? "true" : "false");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config value for '" + key + "' is not a boolean: " + v);
}

RunWriter::RunWriter(const std::string& out_dir, const std::vector<std::string>& plot_columns) {
  if (out_dir.empty()) return;
  std::filesystem::create_directories(out_dir);
  records_path_ = out_dir + "/records.txt";
  plot_path_ = out_dir + "/plot.csv";
  std::ofstream records(records_path_, std::ios::trunc);
  std::ofstream plot(plot_path_, std::ios::trunc);
  for (std::size_t i = 0; i < plot_columns.size(); ++i) {
    plot << plot_columns[i] << (i + 1 < plot_columns.size() ? "," : "\n");
  }
  enabled_ = true;
}

RunWriter::~RunWriter() = default;

void RunWriter::record(const std::vector<std::pair<std::string, std::string>>& fields) {
  if (!enabled_) return;
  std::ofstream out(records_path_, std::ios::app);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    out << fields[i].first << '=' << fields[i].second << (i + 1 < fields.size() ? " " : "\n");
  }
}

void RunWriter::plot_row(const std::vector<double>& values) {
  if (!enabled_) return;
  std::ofstream out(plot_path_, std::ios::app);
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << format_g(values[i]) << (i + 1 < values.size() ? "," : "\n");
  }
}

// ---------------------------------------------------------------------------
// Streaming regression
// ---------------------------------------------------------------------------

namespace {

struct StreamData {
  Eigen::MatrixXd X;        // in arrival order
  Eigen::VectorXd y;
  Eigen::MatrixXd X_hold;
  Eigen::VectorXd f_hold;   // noiseless held-out targets
};

/// Drifting sine on [0,1]: f(x) = sin(8 pi x) (1 + x). `ordered` streams x
/// left to right (time-series shape), otherwise draws are i.i.d.
StreamData make_sine_stream(int n, double noise_sd, bool ordered, Rng& rng) {
  StreamData data;
  data.X.resize(n, 1);
  data.y.resize(n);
  auto f = [](double x) { return std::sin(8.0 * std::numbers::pi * x) * (1.0 + x); };
  for (int i = 0; i < n; ++i) {
    const double x = ordered ? (i + rng.uniform()) / n : rng.uniform();
    data.X(i, 0) = x;
    data.y[i] = f(x) + noise_sd * rng.normal();
  }
  const int held = 100;
  data.X_hold.resize(held, 1);
  data.f_hold.resize(held);
  for (int i = 0; i < held; ++i) {
    data.X_hold(i, 0) = (i + 0.5) / held;
    data.f_hold[i] = f(data.X_hold(i, 0));
  }
  return data;
}

double holdout_rmse(const VariationalState& state, const Eigen::MatrixXd& X_hold,
                    const Eigen::VectorXd& f_hold, int limit = -1) {
  const int k = limit < 0 ? static_cast<int>(X_hold.rows()) : limit;
  const PosteriorGaussian post = sgpr_predict(state, X_hold.topRows(k), false);
  return std::sqrt((post.mean.col(0) - f_hold.head(k)).squaredNorm() / k);
}

}  // namespace

StreamRegressResult run_stream_regress(const ExperimentConfig& cfg, const std::string& out_dir) {
  const std::uint64_t seed = cfg.seed();
  const int n = cfg.integer("stream.n", 1000);
  const int batch = cfg.integer("stream.batch", 25);
  const int p_cap = cfg.integer("stream.p", 16);
  const double noise_sd = cfg.num("stream.noise_sd", 0.1);
  const bool ordered = cfg.str("stream.order", "ordered") == "ordered";
  const std::string selection = cfg.str("stream.selection", "pivoted");
  const int train_steps = cfg.integer("stream.train_steps", 30);

  Rng rng(seed);
  StreamData data;
  if (cfg.has("stream.csv_path")) {
    CsvSchema schema;
    std::stringstream features(cfg.str("stream.csv_features", "x"));
    std::string name;
    while (std::getline(features, name, ';')) schema.feature_columns.push_back(name);
    schema.target_column = cfg.str("stream.csv_target", "y");
    const IngestReport report = ingest_csv(cfg.str("stream.csv_path", ""), schema);
    data.X = report.data.X;
    data.y = report.data.y;
    // hold out every tenth row for evaluation
    const int held = static_cast<int>(data.X.rows()) / 10;
    data.X_hold = data.X.topRows(held);
    data.f_hold = data.y.head(held);
  } else {
    data = make_sine_stream(n, noise_sd, ordered, rng);
  }

  const double noise_var = noise_sd * noise_sd;
  const int total = static_cast<int>(data.X.rows());
  // the first fit may cover more points than one streaming batch so the
  // inducing set starts at full size
  const int first = std::min(std::max(cfg.integer("stream.init_n", batch), 1), total);

  // initial fit on the first batch
  KernelHyperparams params(
      Eigen::VectorXd::Constant(data.X.cols(), cfg.num("stream.ls", 1.0)),
      cfg.num("stream.os", 1.0), cfg.num("stream.mean", 0.0), noise_var);
  const int p0 = std::min(p_cap, first);
  InducingSet Z0 = select_inducing(data.X.topRows(first),
                                   NoiseModel::homoskedastic(noise_var, first), params, p0);
  SparseFit fit =
      train_sparse(data.X.topRows(first), data.y.head(first),
                   LikelihoodSpec::gaussian(noise_var), Z0, params, train_steps, 0.1,
                   /*optimize_inducing=*/false);
  VariationalState state = fit.state;
  params = fit.params;
  const double fit_noise = params.noise_variance();

  RunWriter writer(out_dir, {"step", "seen", "rmse", "early_rmse", "residual_trace", "trace1",
                             "trace2"});
  StreamRegressResult result;
  const int early = std::max(static_cast<int>(0.2 * data.X_hold.rows()), 1);
  result.first_fit_early_rmse = holdout_rmse(state, data.X_hold, data.f_hold, early);

  const double start = now_seconds();
  int step_index = 0;
  for (int offset = first; offset < total; offset += batch) {
    const int b = std::min(batch, total - offset);
    const Eigen::MatrixXd Xb = data.X.middleRows(offset, b);
    const Eigen::VectorXd yb = data.y.segment(offset, b);
    const NoiseModel bnoise = NoiseModel::homoskedastic(fit_noise, b);
    const int p = std::min(p_cap, state.num_inducing() + b);

    StreamDiagnostics diag;
    if (selection == "pivoted") {
      std::tie(state, diag) = stream_step(state, Xb, yb, bnoise, p);
    } else if (selection == "fixed") {
      const InducingSet keep = state.Z;
      std::tie(state, diag) = stream_step(state, Xb, yb, bnoise, p, &keep);
    } else if (selection == "drift") {
      // small per-step perturbation of the inducing locations, a stand-in for
      // the gradient updates a streamed collapsed bound would apply
      const double drift = cfg.num("stream.drift", 0.005);
      Eigen::MatrixXd Zd = state.Z.Z();
      for (Eigen::Index i = 0; i < Zd.rows(); ++i) {
        for (int attempt = 0; attempt < 16; ++attempt) {
          Eigen::RowVectorXd row = Zd.row(i);
          for (Eigen::Index j = 0; j < Zd.cols(); ++j) {
            row[j] = std::clamp(row[j] + drift * rng.normal(), 0.0, 1.0);
          }
          bool collides = false;
          for (Eigen::Index k = 0; k < i; ++k) {
            if ((Zd.row(k) - row).cwiseAbs().maxCoeff() < 1e-10) collides = true;
          }
          if (!collides) {
            Zd.row(i) = row;
            break;
          }
        }
      }
      const InducingSet forced(Zd);
      std::tie(state, diag) = stream_step(state, Xb, yb, bnoise, p, &forced);
    } else if (selection == "resample") {
      // replacement heuristic baseline: a random p-subset of old Z and batch
      Eigen::MatrixXd stacked(state.num_inducing() + b, data.X.cols());
      stacked.topRows(state.num_inducing()) = state.Z.Z();
      stacked.bottomRows(b) = Xb;
      std::vector<int> idx(stacked.rows());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
      for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
        std::swap(idx[i], idx[rng.below(i + 1)]);
      }
      std::vector<int> chosen;
      for (int id : idx) {
        bool dup = false;
        for (int c : chosen) {
          if ((stacked.row(id) - stacked.row(c)).cwiseAbs().maxCoeff() < 1e-10) dup = true;
        }
        if (!dup) chosen.push_back(id);
        if (static_cast<int>(chosen.size()) == p) break;
      }
      Eigen::MatrixXd Zr(chosen.size(), stacked.cols());
      for (std::size_t i = 0; i < chosen.size(); ++i) Zr.row(i) = stacked.row(chosen[i]);
      const InducingSet forced(Zr);
      std::tie(state, diag) = stream_step(state, Xb, yb, bnoise, p, &forced);
    } else {
      throw ConfigError("stream.selection must be pivoted, resample, drift, or fixed");
    }

    StreamStepLog log;
    log.step = ++step_index;
    log.seen = offset + b;
    log.rmse = holdout_rmse(state, data.X_hold, data.f_hold);
    log.early_rmse = holdout_rmse(state, data.X_hold, data.f_hold, early);
    log.residual_trace = diag.residual_trace;
    log.trace1 = diag.trace1;
    log.trace2 = diag.trace2;
    log.wall_seconds = now_seconds() - start;
    result.steps.push_back(log);
    writer.record({{"step", std::to_string(log.step)},
                   {"seen", std::to_string(log.seen)},
                   {"wall", format_g(log.wall_seconds)},
                   {"rmse", format_g(log.rmse)},
                   {"early_rmse", format_g(log.early_rmse)},
                   {"residual_trace", format_g(log.residual_trace)},
                   {"trace1", format_g(log.trace1)},
                   {"trace2", format_g(log.trace2)}});
    writer.plot_row({static_cast<double>(log.step), static_cast<double>(log.seen), log.rmse,
                     log.early_rmse, log.residual_trace, log.trace1, log.trace2});
  }
  result.final_rmse = result.steps.empty() ? holdout_rmse(state, data.X_hold, data.f_hold)
                                           : result.steps.back().rmse;
  return result;
}

// ---------------------------------------------------------------------------
// Bayesian optimization
// ---------------------------------------------------------------------------

namespace {

struct Standardizer {
  double mean = 0.0;
  double sd = 1.0;

  static Standardizer fit(const Eigen::VectorXd& y) {
    Standardizer s;
    s.mean = y.mean();
    const double var = (y.array() - s.mean).square().sum() / std::max<int>(1, y.size() - 1);
    s.sd = std::sqrt(std::max(var, 1e-12));
    return s;
  }
  Eigen::VectorXd transform(const Eigen::VectorXd& y) const {
    return (y.array() - mean) / sd;
  }
};

struct BoProblem {
  int dim = 0;
  bool constrained = false;
  bool poisson = false;
  // true (noiseless) objective value and feasibility
  std::function<std::pair<double, bool>(const Eigen::VectorXd&)> truth;
  // noisy observation
  std::function<double(const Eigen::VectorXd&, Rng&)> observe;
};

BoProblem make_bo_problem(const std::string& name, double noise_sd) {
  BoProblem prob;
  if (name == "hartmann6") {
    prob.dim = 6;
    prob.constrained = true;
    prob.truth = [](const Eigen::VectorXd& x) { return objective_hartmann6_constrained(x); };
    prob.observe = [noise_sd](const Eigen::VectorXd& x, Rng& rng) {
      return hartmann6(x) + noise_sd * rng.normal();
    };
  } else if (name == "poisson-hartmann6") {
    prob.dim = 6;
    prob.constrained = true;
    prob.poisson = true;
    prob.truth = [](const Eigen::VectorXd& x) { return objective_hartmann6_constrained(x); };
    prob.observe = [](const Eigen::VectorXd& x, Rng& rng) {
      return static_cast<double>(objective_poisson_hartmann6(x, rng));
    };
  } else if (name == "branin") {
    prob.dim = 2;
    prob.constrained = false;
    prob.truth = [](const Eigen::VectorXd& x) {
      const double x1 = -5.0 + 15.0 * x[0];
      const double x2 = 15.0 * x[1];
      return std::make_pair(-branin(x1, x2), true);
    };
    prob.observe = [noise_sd](const Eigen::VectorXd& x, Rng& rng) {
      const double x1 = -5.0 + 15.0 * x[0];
      const double x2 = 15.0 * x[1];
      return -branin(x1, x2) + noise_sd * rng.normal();
    };
  } else {
    throw ConfigError("unknown bo.objective: " + name);
  }
  return prob;
}

/// Probability of ||x||_1 <= 3 under an exact GP fit to the observed
/// constraint values.
struct FeasibilityModel {
  bool active = false;
  std::optional<ExactGpModel> gp;

  double prob(const Eigen::RowVectorXd& x) const {
    if (!active) return 1.0;
    const PosteriorGaussian post = predict(*gp, x, false);
    const double sd = std::sqrt(std::max(post.variance[0], 1e-12));
    return norm_cdf((3.0 - post.mean(0, 0)) / sd);
  }
  double prob_batch(const Eigen::MatrixXd& X) const {
    double acc = 1.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) acc *= prob(X.row(i));
    return acc;
  }
};

}  // namespace

BoResult run_bo(const ExperimentConfig& cfg, const std::string& out_dir) {
  const std::uint64_t seed = cfg.seed();
  const std::string objective = cfg.str("bo.objective", "hartmann6");
  const std::string model_kind = cfg.str("bo.model", "sparse");
  const std::string acq = cfg.str("bo.acq", "qkg");
  const int q = cfg.integer("bo.q", 3);
  const int iters = cfg.integer("bo.iters", 50);
  const int init = cfg.integer("bo.init", 10);
  const double noise_sd = cfg.num("bo.noise_sd", 0.1);
  const int p_cap = cfg.integer("bo.p", 25);
  const int train_steps = cfg.integer("bo.train_steps", 25);
  const bool optimize_z = cfg.flag("bo.optimize_z", false);
  const int fantasies = cfg.integer("bo.fantasies", 64);
  const int mc_samples = cfg.integer("bo.mc_samples", 256);
  const int restarts = cfg.integer("bo.restarts", 2);
  const int raw_samples = cfg.integer("bo.raw_samples", 48);

  const BoProblem prob = make_bo_problem(objective, noise_sd);
  const Bounds bounds{Eigen::VectorXd::Zero(prob.dim), Eigen::VectorXd::Ones(prob.dim)};
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);

  // initial design
  Eigen::MatrixXd X = candidate_set(bounds, init, seed ^ 0x1f123bb5ULL);
  Eigen::VectorXd y(init);
  Eigen::VectorXd cvals(init);
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < init; ++i) {
    y[i] = prob.observe(X.row(i).transpose(), rng);
    cvals[i] = X.row(i).lpNorm<1>();
    const auto [val, feasible] = prob.truth(X.row(i).transpose());
    if (feasible) best = std::max(best, val);
  }

  RunWriter writer(out_dir, {"iteration", "best_value", "acq_value"});
  BoResult result;
  const double start = now_seconds();

  // hyperparameters are warm-started across refits
  KernelHyperparams warm = KernelHyperparams::defaults(prob.dim).with_noise_variance(
      prob.poisson ? 0.25 : noise_sd * noise_sd);

  for (int it = 0; it < iters; ++it) {
    // --- refit ----------------------------------------------------------
    const int n = static_cast<int>(X.rows());
    Surrogate model = [&]() -> Surrogate {
      if (prob.poisson) {
        const int p = std::min(p_cap, n);
        const InducingSet Z0 = select_inducing(
            X, NoiseModel::homoskedastic(warm.noise_variance(), n), warm, p);
        const SparseFit fit = train_sparse(X, y, LikelihoodSpec::poisson(), Z0, warm,
                                           train_steps, 0.1, optimize_z);
        warm = fit.params;
        return fit.state;
      }
      const Standardizer std_y = Standardizer::fit(y);
      const Eigen::VectorXd ys = std_y.transform(y);
      const double noise_var =
          std::max(noise_sd * noise_sd / (std_y.sd * std_y.sd), 1e-6);
      if (model_kind == "exact") {
        const KernelHyperparams trained =
            train_hypers_exact(X, ys, warm.with_noise_variance(noise_var), train_steps);
        warm = trained;
        return Surrogate{fit_exact(
            X, ys, NoiseModel::homoskedastic(trained.noise_variance(), n), trained)};
      }
      const KernelHyperparams init_params = warm.with_noise_variance(noise_var);
      const int p = std::min(p_cap, n);
      const InducingSet Z0 =
          select_inducing(X, NoiseModel::homoskedastic(noise_var, n), init_params, p);
      const SparseFit fit = train_sparse(X, ys, LikelihoodSpec::gaussian(noise_var), Z0,
                                         init_params, train_steps, 0.1, optimize_z);
      warm = fit.params;
      return fit.state;
    }();

    // NOTE: non-Poisson surrogates are trained on standardized targets; all
    // acquisition decisions are invariant to that affine map, and best-value
    // tracking below uses true objective values only.

    FeasibilityModel feas;
    if (prob.constrained) {
      feas.active = true;
      const KernelHyperparams cparams = train_hypers_exact(
          X, cvals, KernelHyperparams::defaults(prob.dim).with_noise_variance(1e-4), 10);
      feas.gp =
          fit_exact(X, cvals, NoiseModel::homoskedastic(cparams.noise_variance(), n), cparams);
    }

    // --- acquisition ------------------------------------------------------
    Eigen::MatrixXd batch(q, prob.dim);
    double acq_value = 0.0;
    const std::uint64_t it_seed = seed + 1000003ULL * static_cast<std::uint64_t>(it + 1);
    if (acq == "random") {
      batch = candidate_set(bounds, q, it_seed);
    } else if (acq == "ts") {
      batch = thompson_select(model, candidate_set(bounds, 256, it_seed), q, it_seed);
    } else if (acq == "ei") {
      // sequential greedy with analytic EI times feasibility
      const PosteriorGaussian at_train = surrogate_posterior(model, X, false);
      const double incumbent = at_train.mean.col(0).maxCoeff();
      for (int k = 0; k < q; ++k) {
        const auto acq_fn = [&](const Eigen::VectorXd& x) {
          return expected_improvement(model, x.transpose(), incumbent) *
                 feas.prob(x.transpose());
        };
        const OptimizeResult res =
            optimize_acquisition(acq_fn, bounds, restarts + 2, 256, it_seed + k);
        batch.row(k) = res.x.transpose();
        acq_value = res.value;
      }
    } else if (acq == "qnei") {
      const auto acq_fn = [&](const Eigen::VectorXd& flat) {
        Eigen::MatrixXd Q(q, prob.dim);
        for (int j = 0; j < prob.dim; ++j) Q.col(j) = flat.segment(j * q, q);
        return qnei(model, Q, X, McSettings{mc_samples, true, it_seed}) *
               feas.prob_batch(Q);
      };
      Eigen::VectorXd flat_lo(q * prob.dim), flat_hi(q * prob.dim);
      for (int j = 0; j < prob.dim; ++j) {
        flat_lo.segment(j * q, q).setConstant(0.0);
        flat_hi.segment(j * q, q).setConstant(1.0);
      }
      // multi-start over flattened batches; the first start polishes around
      // the best observed point
      HaltonSampler h(prob.dim, it_seed ^ 0x41c64e6dULL);
      Rng jitter(it_seed ^ 0x7742ULL);
      double best_v = -std::numeric_limits<double>::infinity();
      for (int r = 0; r <= restarts; ++r) {
        Eigen::MatrixXd start_batch;
        if (r == 0) {
          Eigen::Index best_row;
          y.maxCoeff(&best_row);
          start_batch = X.row(best_row).replicate(q, 1);
          for (int k = 0; k < q; ++k) {
            for (int j = 0; j < prob.dim; ++j) {
              start_batch(k, j) =
                  std::clamp(start_batch(k, j) + 0.1 * jitter.normal(), 0.0, 1.0);
            }
          }
        } else {
          start_batch = h.next_in_box(q, bounds.lower, bounds.upper);
        }
        Eigen::VectorXd flat(q * prob.dim);
        for (int j = 0; j < prob.dim; ++j) flat.segment(j * q, q) = start_batch.col(j);
        const BoxOptimResult res = box_ascent(acq_fn, flat, flat_lo, flat_hi, 30, 1e-4);
        if (res.value > best_v) {
          best_v = res.value;
          for (int j = 0; j < prob.dim; ++j) batch.col(j) = res.x.segment(j * q, q);
        }
      }
      acq_value = best_v;
    } else if (acq == "qkg") {
      QkgOptions opts;
      opts.q = q;
      opts.fantasies = fantasies;
      opts.restarts = restarts;
      opts.raw_samples = raw_samples;
      opts.seed = it_seed;
      const LikelihoodSpec lik =
          prob.poisson ? LikelihoodSpec::poisson()
                       : LikelihoodSpec::gaussian(surrogate_params(model).noise_variance());
      if (feas.active) {
        opts.batch_weight = [&](const Eigen::MatrixXd& Q) { return feas.prob_batch(Q); };
      }
      batch = optimize_qkg(model, lik, bounds, opts);
    } else {
      throw ConfigError("unknown bo.acq: " + acq);
    }

    // --- evaluate and append ---------------------------------------------
    const int n_old = static_cast<int>(X.rows());
    X.conservativeResize(n_old + q, Eigen::NoChange);
    y.conservativeResize(n_old + q);
    cvals.conservativeResize(n_old + q);
    for (int k = 0; k < q; ++k) {
      X.row(n_old + k) = batch.row(k);
      y[n_old + k] = prob.observe(batch.row(k).transpose(), rng);
      cvals[n_old + k] = batch.row(k).lpNorm<1>();
      const auto [val, feasible] = prob.truth(batch.row(k).transpose());
      if (feasible) best = std::max(best, val);
    }

    BoIterLog log;
    log.iteration = it + 1;
    log.best_value = best;
    log.acq_value = acq_value;
    log.wall_seconds = now_seconds() - start;
    log.queries = batch;
    result.iterations.push_back(log);
    std::string queries;
    for (int k = 0; k < q; ++k) {
      for (int j = 0; j < prob.dim; ++j) {
        queries += format_g(batch(k, j));
        queries += (j + 1 < prob.dim ? "," : k + 1 < q ? ";" : "");
      }
    }
    writer.record({{"iteration", std::to_string(log.iteration)},
                   {"wall", format_g(log.wall_seconds)},
                   {"best_value", format_g(log.best_value)},
                   {"acq_value", format_g(log.acq_value)},
                   {"queries", queries}});
    writer.plot_row({static_cast<double>(log.iteration), log.best_value, log.acq_value});
  }
  result.final_best = best;
  return result;
}

// ---------------------------------------------------------------------------
// Active learning
// ---------------------------------------------------------------------------

ActiveLearnResult run_active_learn(const ExperimentConfig& cfg, const std::string& out_dir) {
  const std::uint64_t seed = cfg.seed();
  const std::string mode = cfg.str("al.mode", "nipv");
  const std::string selection = cfg.str("al.selection", "acq");
  const int grid_side = cfg.integer("al.grid", 20);
  const int iters = cfg.integer("al.iters", 12);
  const int q = cfg.integer("al.q", mode == "nipv" ? 4 : 1);
  const int init = cfg.integer("al.init", 8);
  const double tau = cfg.num("al.tau", 0.35);
  const int train_steps = cfg.integer("al.train_steps", 20);
  const int cand_pool = cfg.integer("al.candidates", 48);
  const int eval_subset = cfg.integer("al.eval_subset", 64);
  const int k_inner = cfg.integer("al.k_inner", 16);
  const int k_outer = cfg.integer("al.k_outer", 16);

  const SpatialField field = generate_spatial_prevalence(grid_side, seed);
  const int total = field.size();
  Rng rng(seed ^ 0x243f6a8885a308d3ULL);

  std::vector<int> selected;
  std::vector<bool> taken(total, false);
  auto take = [&](int site) {
    selected.push_back(site);
    taken[site] = true;
  };
  // seeded initial design: spread by a random permutation
  {
    std::vector<int> idx(total);
    for (int i = 0; i < total; ++i) idx[i] = i;
    for (int i = total - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    for (int i = 0; i < init; ++i) take(idx[i]);
  }

  RunWriter writer(out_dir, {"iteration", "rmse", "accuracy"});
  ActiveLearnResult result;
  const double start = now_seconds();

  const auto gather = [&](const std::vector<int>& sites) {
    Eigen::MatrixXd Xs(sites.size(), 2);
    Eigen::VectorXd ys(sites.size());
    Eigen::VectorXi ns(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) {
      Xs.row(i) = field.locations.row(sites[i]);
      ys[i] = field.counts[sites[i]];
      ns[i] = field.trials[sites[i]];
    }
    return std::make_tuple(Xs, ys, ns);
  };

  for (int it = 0; it <= iters; ++it) {
    const auto [Xs, ys, ns] = gather(selected);
    const int n = static_cast<int>(Xs.rows());

    Surrogate model = [&]() -> Surrogate {
      if (mode == "nipv") {
        // model the empirical prevalence with its known binomial variance
        Eigen::VectorXd prev(n), vars(n);
        for (int i = 0; i < n; ++i) {
          prev[i] = ys[i] / ns[i];
          const double r = std::clamp(prev[i], 0.02, 0.98);
          vars[i] = std::max(r * (1.0 - r) / ns[i], 1e-6);
        }
        KernelHyperparams params = train_hypers_exact(
            Xs, prev, KernelHyperparams::defaults(2).with_noise_variance(1e-3), train_steps);
        return fit_exact(Xs, prev, NoiseModel::diagonal(vars), params);
      }
      // hotspot mode: latent Binomial model via the Laplace surrogate
      const KernelHyperparams params(Eigen::VectorXd::Constant(2, 0.3), 1.5, -0.5, 1e-2);
      const auto [targets, noise] =
          laplace_surrogate_batch(params, Xs, ys, LikelihoodSpec::binomial(ns));
      const int p = std::min(25, n);
      const InducingSet Z = select_inducing(Xs, noise, params, p);
      return canonical_to_variational(canonical_from_data(Xs, targets, noise, Z, params));
    }();

    // metrics over all sites
    const PosteriorGaussian all = surrogate_posterior(model, field.locations, false);
    double se = 0.0;
    int correct = 0;
    for (int i = 0; i < total; ++i) {
      const double pred =
          mode == "nipv" ? all.mean(i, 0) : sigmoid(all.mean(i, 0));
      se += (pred - field.latent_r[i]) * (pred - field.latent_r[i]);
      if ((pred > tau) == (field.latent_r[i] > tau)) ++correct;
    }
    ActiveLearnIterLog log;
    log.iteration = it;
    log.rmse = std::sqrt(se / total);
    log.accuracy = static_cast<double>(correct) / total;
    log.wall_seconds = now_seconds() - start;
    result.iterations.push_back(log);
    writer.record({{"iteration", std::to_string(it)},
                   {"wall", format_g(log.wall_seconds)},
                   {"rmse", format_g(log.rmse)},
                   {"accuracy", format_g(log.accuracy)}});
    writer.plot_row({static_cast<double>(it), log.rmse, log.accuracy});
    if (it == iters) break;

    // candidate pool for this round
    std::vector<int> pool;
    {
      std::vector<int> remaining;
      for (int i = 0; i < total; ++i) {
        if (!taken[i]) remaining.push_back(i);
      }
      if (remaining.empty()) break;
      for (int i = static_cast<int>(remaining.size()) - 1; i > 0; --i) {
        std::swap(remaining[i], remaining[rng.below(i + 1)]);
      }
      const int take_n = std::min<int>(cand_pool, static_cast<int>(remaining.size()));
      pool.assign(remaining.begin(), remaining.begin() + take_n);
    }

    if (selection == "random") {
      for (int k = 0; k < q && k < static_cast<int>(pool.size()); ++k) take(pool[k]);
      continue;
    }

    if (mode == "nipv") {
      // greedy batch: condition on each chosen site before scoring the next
      Surrogate work = model;
      for (int k = 0; k < q; ++k) {
        double best_v = -std::numeric_limits<double>::infinity();
        int best_site = -1;
        for (int site : pool) {
          if (taken[site]) continue;
          const double v =
              nipv(work, field.locations.row(site), field.locations);
          if (v > best_v) {
            best_v = v;
            best_site = site;
          }
        }
        if (best_site < 0) break;
        take(best_site);
        const Eigen::MatrixXd xq = field.locations.row(best_site);
        const PosteriorGaussian at = surrogate_posterior(work, xq, false);
        work = surrogate_fantasize(
            work, xq, at.mean,
            NoiseModel::homoskedastic(surrogate_params(work).noise_variance(), 1));
      }
    } else {
      // hotspot entropy-reduction selection over the candidate pool
      Eigen::MatrixXd eval(std::min(eval_subset, total), 2);
      for (Eigen::Index i = 0; i < eval.rows(); ++i) {
        eval.row(i) = field.locations.row(rng.below(total));
      }
      for (int k = 0; k < q; ++k) {
        double best_v = std::numeric_limits<double>::infinity();
        int best_site = -1;
        for (int site : pool) {
          if (taken[site]) continue;
          const double v = hotspot_acquisition(
              model, field.locations.row(site),
              Eigen::VectorXi::Constant(1, field.trials[site]), eval, tau, k_inner, k_outer,
              seed + 31u * static_cast<std::uint64_t>(it) + site);
          if (v < best_v) {
            best_v = v;
            best_site = site;
          }
        }
        if (best_site < 0) break;
        take(best_site);
      }
    }
  }

  result.final_rmse = result.iterations.back().rmse;
  result.final_accuracy = result.iterations.back().accuracy;
  return result;
}

// ---------------------------------------------------------------------------
// Streaming classification
// ---------------------------------------------------------------------------

namespace {

/// Two interleaved crescents ("banana" shape) with labels 0/1.
void make_bananas(int n, Rng& rng, Eigen::MatrixXd* X, Eigen::VectorXd* y) {
  X->resize(n, 2);
  y->resize(n);
  for (int i = 0; i < n; ++i) {
    const bool cls = i % 2 == 0;
    const double t = std::numbers::pi * rng.uniform();
    const double r = 1.0 + 0.12 * rng.normal();
    if (cls) {
      (*X)(i, 0) = r * std::cos(t);
      (*X)(i, 1) = r * std::sin(t) - 0.3;
    } else {
      (*X)(i, 0) = 1.0 - r * std::cos(t);
      (*X)(i, 1) = 0.3 - r * std::sin(t);
    }
    (*y)[i] = cls ? 1.0 : 0.0;
  }
}

}  // namespace

ClassifyStreamResult run_classify_stream(const ExperimentConfig& cfg,
                                         const std::string& out_dir) {
  const std::uint64_t seed = cfg.seed();
  const int per_batch = cfg.integer("cs.batch", 100);
  const int batches = cfg.integer("cs.batches", 4);
  const int p_cap = cfg.integer("cs.p", 25);
  const int held = cfg.integer("cs.holdout", 200);

  Rng rng(seed ^ 0x13198a2e03707344ULL);
  Eigen::MatrixXd X_all, X_hold;
  Eigen::VectorXd y_all, y_hold;
  make_bananas(per_batch * batches, rng, &X_all, &y_all);
  make_bananas(held, rng, &X_hold, &y_hold);

  // non-i.i.d arrival: stream the data left to right
  std::vector<int> order(X_all.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return X_all(a, 0) < X_all(b, 0); });
  Eigen::MatrixXd X(X_all.rows(), 2);
  Eigen::VectorXd y(X_all.rows());
  for (std::size_t i = 0; i < order.size(); ++i) {
    X.row(i) = X_all.row(order[i]);
    y[i] = y_all[order[i]];
  }

  const KernelHyperparams params(Eigen::VectorXd::Constant(2, 0.7), 3.0, 0.0, 1e-2);
  const LikelihoodSpec lik = LikelihoodSpec::bernoulli();

  RunWriter writer(out_dir, {"batch", "accuracy"});
  ClassifyStreamResult result;

  auto accuracy_of = [&](const VariationalState& state) {
    const PosteriorGaussian post = sgpr_predict(state, X_hold, false);
    int agree = 0;
    for (int i = 0; i < held; ++i) {
      if ((post.mean(i, 0) > 0.0) == (y_hold[i] > 0.5)) ++agree;
    }
    return static_cast<double>(agree) / held;
  };

  VariationalState state = [&] {
    const auto [t0, n0] =
        laplace_surrogate_batch(params, X.topRows(per_batch), y.head(per_batch), lik);
    const InducingSet Z0 = select_inducing(X.topRows(per_batch), n0, params,
                                           std::min(p_cap, per_batch));
    return canonical_to_variational(
        canonical_from_data(X.topRows(per_batch), t0, n0, Z0, params));
  }();
  result.accuracy_per_batch.push_back(accuracy_of(state));
  writer.record({{"batch", "1"}, {"accuracy", format_g(result.accuracy_per_batch.back())}});
  writer.plot_row({1.0, result.accuracy_per_batch.back()});

  for (int b = 1; b < batches; ++b) {
    const Eigen::MatrixXd Xb = X.middleRows(b * per_batch, per_batch);
    const Eigen::VectorXd yb = y.segment(b * per_batch, per_batch);
    const auto [targets, noise] = laplace_surrogate_batch(params, Xb, yb, lik);
    state = stream_step(state, Xb, targets, noise,
                        std::min(p_cap, state.num_inducing() + per_batch))
                .first;
    result.accuracy_per_batch.push_back(accuracy_of(state));
    writer.record({{"batch", std::to_string(b + 1)},
                   {"accuracy", format_g(result.accuracy_per_batch.back())}});
    writer.plot_row({static_cast<double>(b + 1), result.accuracy_per_batch.back()});
  }
  result.final_accuracy = result.accuracy_per_batch.back();

  // full-refit reference
  const auto [t_all, n_all] = laplace_surrogate_batch(params, X, y, lik);
  const InducingSet Z_all =
      select_inducing(X, n_all, params, std::min(p_cap, static_cast<int>(X.rows())));
  const VariationalState refit =
      canonical_to_variational(canonical_from_data(X, t_all, n_all, Z_all, params));
  result.full_refit_accuracy = accuracy_of(refit);
  writer.record({{"full_refit_accuracy", format_g(result.full_refit_accuracy)}});
  return result;
}

// ---------------------------------------------------------------------------
// LTS demo
// ---------------------------------------------------------------------------

LtsDemoResult run_lts_demo(const ExperimentConfig& cfg, const std::string& out_dir) {
  const std::uint64_t seed = cfg.seed();
  const int n = cfg.integer("lts.n", 30);
  const int p = cfg.integer("lts.p", 12);
  const double noise_sd = cfg.num("lts.noise_sd", 0.05);

  Rng rng(seed ^ 0xa4093822299f31d0ULL);
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform();
    y[i] = bimodal1d(X(i, 0)) + noise_sd * rng.normal();
  }
  const double noise_var = noise_sd * noise_sd;
  const KernelHyperparams params(Eigen::VectorXd::Constant(1, 0.12), 0.3, 0.0, noise_var);
  const InducingSet Z = select_inducing(X, NoiseModel::homoskedastic(noise_var, n), params, p);
  const Surrogate model = canonical_to_variational(
      canonical_from_data(X, y, NoiseModel::homoskedastic(noise_var, n), Z, params));

  LtsConfig lcfg;
  lcfg.horizon = cfg.integer("lts.horizon", 3);
  lcfg.paths = cfg.integer("lts.paths", 4);
  lcfg.candidates_per_step = cfg.integer("lts.candidates", 128);
  lcfg.batch_q = cfg.integer("lts.q", 2);
  lcfg.seed = seed;

  LtsTrace trace;
  LtsDemoResult result;
  result.batch = lts(model, Bounds{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)}, lcfg,
                     &trace);
  result.condition_numbers = trace.condition_numbers;
  result.best_objective = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < result.batch.rows(); ++i) {
    result.best_objective = std::max(result.best_objective, bimodal1d(result.batch(i, 0)));
  }

  RunWriter writer(out_dir, {"path", "condition_number"});
  for (std::size_t i = 0; i < trace.condition_numbers.size(); ++i) {
    writer.record({{"path", std::to_string(i)},
                   {"condition_number", format_g(trace.condition_numbers[i])}});
    writer.plot_row({static_cast<double>(i), trace.condition_numbers[i]});
  }
  writer.record({{"best_objective", format_g(result.best_objective)}});
  return result;
}

// ---------------------------------------------------------------------------
// Snapshot export
// ---------------------------------------------------------------------------

std::string run_export_state(const ExperimentConfig& cfg, const std::string& out_dir) {
  const std::uint64_t seed = cfg.seed();
  const int n = cfg.integer("es.n", 200);
  const int p = cfg.integer("es.p", 16);
  const int train_steps = cfg.integer("es.train_steps", 30);

  Rng rng(seed ^ 0x452821e638d01377ULL);
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  if (cfg.has("es.csv_path")) {
    CsvSchema schema;
    std::stringstream features(cfg.str("es.csv_features", "x"));
    std::string name;
    while (std::getline(features, name, ';')) schema.feature_columns.push_back(name);
    schema.target_column = cfg.str("es.csv_target", "y");
    const IngestReport report = ingest_csv(cfg.str("es.csv_path", ""), schema);
    X = report.data.X;
    y = report.data.y;
  } else {
    X.resize(n, 1);
    y.resize(n);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = rng.uniform();
      y[i] = std::sin(8.0 * X(i, 0)) + 0.1 * rng.normal();
    }
  }

  const KernelHyperparams init = KernelHyperparams::defaults(static_cast<int>(X.cols()))
                                     .with_noise_variance(0.01);
  const InducingSet Z0 = select_inducing(
      X, NoiseModel::homoskedastic(0.01, static_cast<int>(X.rows())), init,
      std::min<int>(p, static_cast<int>(X.rows())));
  const SparseFit fit = train_sparse(X, y, LikelihoodSpec::gaussian(0.01), Z0, init,
                                     train_steps, 0.1, false);

  std::filesystem::create_directories(out_dir.empty() ? "." : out_dir);
  const std::string path = (out_dir.empty() ? "." : out_dir) + std::string("/state.txt");
  std::ofstream out(path);
  save_snapshot(out, snapshot_state(fit.state));
  return path;
}

}  // namespace ovc
