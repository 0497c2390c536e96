// Experiment runner: streaming regression, Bayesian optimization, active
// learning, streaming classification, look-ahead Thompson sampling, and state
// snapshot export. Runs are reproducible from the config plus --seed; each run
// writes records.txt (one key=value record per line) and plot.csv into --out.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "ovc/errors.hpp"
#include "ovc/experiment.hpp"

namespace {

ovc::ExperimentConfig build_config(const std::string& config_path, double seed,
                                   const std::vector<std::string>& overrides) {
  ovc::ExperimentConfig cfg;
  if (!config_path.empty()) cfg = ovc::ExperimentConfig::from_file(config_path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ovc::ConfigError("--override expects key=value, got: " + kv);
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed >= 0) cfg.set("seed", std::to_string(static_cast<std::uint64_t>(seed)));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-GP streaming and look-ahead decision-making toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may appear after the subcommand

  std::string config_path;
  std::string out_dir = "out";
  double seed = -1.0;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "flat key=value config file");
  app.add_option("--seed", seed, "seed override (u64)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--override", overrides, "config override key=value (repeatable)");

  auto* stream = app.add_subcommand("stream-regress", "streaming regression with online updates");
  auto* bo = app.add_subcommand("bo-run", "Bayesian optimization loop");
  auto* active = app.add_subcommand("active-learn", "active learning on the spatial field");
  auto* ltsdemo = app.add_subcommand("lts-demo", "look-ahead Thompson sampling demo");
  auto* classify = app.add_subcommand("classify-stream", "streaming binary classification");
  auto* exportst = app.add_subcommand("export-state", "fit a sparse model and export its snapshot");

  CLI11_PARSE(app, argc, argv);

  try {
    const ovc::ExperimentConfig cfg = build_config(config_path, seed, overrides);
    if (stream->parsed()) {
      const ovc::StreamRegressResult res = ovc::run_stream_regress(cfg, out_dir);
      std::printf("stream-regress done: steps=%zu final_rmse=%.6g\n", res.steps.size(),
                  res.final_rmse);
    } else if (bo->parsed()) {
      const ovc::BoResult res = ovc::run_bo(cfg, out_dir);
      std::printf("bo-run done: iterations=%zu best_value=%.6g\n", res.iterations.size(),
                  res.final_best);
    } else if (active->parsed()) {
      const ovc::ActiveLearnResult res = ovc::run_active_learn(cfg, out_dir);
      std::printf("active-learn done: final_rmse=%.6g final_accuracy=%.6g\n", res.final_rmse,
                  res.final_accuracy);
    } else if (ltsdemo->parsed()) {
      const ovc::LtsDemoResult res = ovc::run_lts_demo(cfg, out_dir);
      double max_cond = 0.0;
      for (double c : res.condition_numbers) max_cond = std::max(max_cond, c);
      std::printf("lts-demo done: batch_size=%ld best_objective=%.6g max_condition=%.4g\n",
                  static_cast<long>(res.batch.rows()), res.best_objective, max_cond);
    } else if (classify->parsed()) {
      const ovc::ClassifyStreamResult res = ovc::run_classify_stream(cfg, out_dir);
      std::printf("classify-stream done: final_accuracy=%.6g full_refit_accuracy=%.6g\n",
                  res.final_accuracy, res.full_refit_accuracy);
    } else if (exportst->parsed()) {
      const std::string path = ovc::run_export_state(cfg, out_dir);
      std::printf("export-state done: %s\n", path.c_str());
    }
  } catch (const ovc::ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return 2;
  } catch (const ovc::DimensionError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return 2;
  } catch (const ovc::NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << '\n';
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 3;
  }
  return 0;
}
