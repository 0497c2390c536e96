#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "ovc/data.hpp"
#include "ovc/errors.hpp"

namespace ovc {

/// Flat key=value experiment configuration with typed accessors. Values from
/// later set() calls (CLI overrides) win over the file contents.
class ExperimentConfig {
public:
  ExperimentConfig() = default;
  static ExperimentConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string str(const std::string& key, const std::string& fallback) const;
  double num(const std::string& key, double fallback) const;
  int integer(const std::string& key, int fallback) const;
  std::uint64_t seed() const { return static_cast<std::uint64_t>(num("seed", 0)); }
  bool flag(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

private:
  std::map<std::string, std::string> kv_;
};

/// Appends one self-describing key=value record per line to records.txt and a
/// row per iteration to plot.csv inside the run directory. A null/empty
/// directory disables writing (library callers).
class RunWriter {
public:
  RunWriter() = default;
  explicit RunWriter(const std::string& out_dir, const std::vector<std::string>& plot_columns);
  ~RunWriter();

  void record(const std::vector<std::pair<std::string, std::string>>& fields);
  void plot_row(const std::vector<double>& values);
  bool enabled() const { return enabled_; }

private:
  bool enabled_ = false;
  std::string records_path_;
  std::string plot_path_;
};

// ---------------------------------------------------------------------------
// Streaming regression
// ---------------------------------------------------------------------------

struct StreamStepLog {
  int step = 0;
  int seen = 0;
  double rmse = 0.0;         // held-out RMSE after the step
  double early_rmse = 0.0;   // RMSE restricted to the earliest 20% of the stream
  double residual_trace = 0.0;
  double trace1 = 0.0;
  double trace2 = 0.0;
  double wall_seconds = 0.0;
};

struct StreamRegressResult {
  std::vector<StreamStepLog> steps;
  double final_rmse = 0.0;
  double first_fit_early_rmse = 0.0;
};

StreamRegressResult run_stream_regress(const ExperimentConfig& cfg,
                                       const std::string& out_dir = "");

// ---------------------------------------------------------------------------
// Bayesian optimization
// ---------------------------------------------------------------------------

struct BoIterLog {
  int iteration = 0;
  double best_value = 0.0;  // best feasible true value so far
  double acq_value = 0.0;
  double wall_seconds = 0.0;
  Eigen::MatrixXd queries;
};

struct BoResult {
  std::vector<BoIterLog> iterations;
  double final_best = 0.0;
};

BoResult run_bo(const ExperimentConfig& cfg, const std::string& out_dir = "");

// ---------------------------------------------------------------------------
// Active learning on the synthetic spatial field
// ---------------------------------------------------------------------------

struct ActiveLearnIterLog {
  int iteration = 0;
  double rmse = 0.0;      // prevalence RMSE over all sites
  double accuracy = 0.0;  // hotspot classification accuracy (hotspot mode)
  double wall_seconds = 0.0;
};

struct ActiveLearnResult {
  std::vector<ActiveLearnIterLog> iterations;
  double final_rmse = 0.0;
  double final_accuracy = 0.0;
};

ActiveLearnResult run_active_learn(const ExperimentConfig& cfg, const std::string& out_dir = "");

// ---------------------------------------------------------------------------
// Streaming classification
// ---------------------------------------------------------------------------

struct ClassifyStreamResult {
  std::vector<double> accuracy_per_batch;
  double final_accuracy = 0.0;
  double full_refit_accuracy = 0.0;
};

ClassifyStreamResult run_classify_stream(const ExperimentConfig& cfg,
                                         const std::string& out_dir = "");

// ---------------------------------------------------------------------------
// Look-ahead Thompson sampling demo
// ---------------------------------------------------------------------------

struct LtsDemoResult {
  Eigen::MatrixXd batch;
  std::vector<double> condition_numbers;
  double best_objective = 0.0;
};

LtsDemoResult run_lts_demo(const ExperimentConfig& cfg, const std::string& out_dir = "");

/// Fits a sparse model on the configured data and writes the compressed state
/// snapshot; returns the snapshot path.
std::string run_export_state(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace ovc
