#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedsim/config.hpp"

namespace fedsim {

// One output record: benign-device aggregates for one (trial, lambda, method)
// cell. lambda_label is "" for methods that have no lambda, "dynamic" for
// per-device selection, otherwise the numeric value.
struct ResultRow {
  int trial = 0;
  std::string lambda_label;
  double lambda_sort_key = 0.0;
  std::string attack;
  std::string aggregator;
  std::string method;
  double benign_mean_loss = 0.0;
  double benign_std_loss = 0.0;
  std::optional<double> benign_mean_acc;
  std::optional<double> benign_std_acc;
  double wall_time_ms = 0.0;
  std::uint64_t seed = 0;
};

// Per-lambda Monte Carlo summary of a sweep, for plotting.
struct SweepSummaryRow {
  std::string lambda_label;
  std::string attack;
  std::string method;
  int trials = 0;
  double mean_benign_loss = 0.0;
  double se_benign_loss = 0.0;
  double mean_benign_std = 0.0;
  double se_benign_std = 0.0;
};

namespace experiment {

// Runs every (trial, method, lambda) cell of the config. Trials are spread
// over a worker pool (FEDSIM_WORKERS, default: hardware concurrency); rows
// come back sorted by (trial, lambda, method) regardless of worker count.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg);

// run_experiment with the given lambda grid, plus the adversary-free twin
// scenario when the config is attacked (and sweep_include_clean holds).
std::vector<ResultRow> sweep_lambda(const ExperimentConfig& cfg,
                                    const std::vector<double>& grid);

std::vector<SweepSummaryRow> summarize(const std::vector<ResultRow>& rows);

// RFC-4180 output, LF line endings, floats at 17 significant digits.
std::string rows_to_csv(const std::vector<ResultRow>& rows);
std::string summary_to_csv(const std::vector<SweepSummaryRow>& rows);
void write_file(const std::string& path, const std::string& contents);

std::string format_float(double v);  // %.17g, round-trip exact

// Builds a population for one trial of the config (attack-time label
// poisoning already applied). Exposed for tests.
Population build_population(const ExperimentConfig& cfg, int trial);

// Derived per-trial seed fed to the solver entry points.
std::uint64_t trial_seed(std::uint64_t master_seed, int trial);

}  // namespace experiment
}  // namespace fedsim
