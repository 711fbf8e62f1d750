#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/theory.hpp"

namespace {

// Exit codes: 0 ok, 1 unexpected, 2 bad config or data, 3 training diverged,
// 4 filesystem trouble.
constexpr int kExitGeneric = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

struct RunOptions {
  std::string config_path;
  std::string out_override;
  std::vector<double> grid;
  std::int64_t seed_override = -1;
  int trials_override = 0;
  int workers = 0;
  bool quiet = false;
};

std::string summary_path_for(const std::string& out) {
  auto dot = out.find_last_of('.');
  auto slash = out.find_last_of("/\\");
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return out + "_summary";
  }
  return out.substr(0, dot) + "_summary" + out.substr(dot);
}

fedsim::ExperimentConfig load_with_overrides(const RunOptions& opt) {
  auto cfg = fedsim::load_config_file(opt.config_path);
  if (opt.seed_override >= 0) cfg.master_seed = static_cast<std::uint64_t>(opt.seed_override);
  if (opt.trials_override > 0) cfg.trials = opt.trials_override;
  if (!opt.out_override.empty()) cfg.output = opt.out_override;
  if (opt.workers > 0) {
    setenv("FEDSIM_WORKERS", std::to_string(opt.workers).c_str(), 1);
  }
  return cfg;
}

int do_run(const RunOptions& opt, bool sweep) {
  auto cfg = load_with_overrides(opt);
  std::vector<fedsim::ResultRow> rows;
  if (sweep) {
    std::vector<double> grid = opt.grid.empty() ? cfg.sweep_grid : opt.grid;
    if (grid.empty()) {
      throw fedsim::ConfigError("sweep needs --grid or a sweep_grid in the config");
    }
    rows = fedsim::experiment::sweep_lambda(cfg, grid);
  } else {
    rows = fedsim::experiment::run_experiment(cfg);
  }
  fedsim::experiment::write_file(cfg.output, fedsim::experiment::rows_to_csv(rows));

  auto summary = fedsim::experiment::summarize(rows);
  std::string summary_csv = fedsim::experiment::summary_to_csv(summary);
  if (sweep) {
    fedsim::experiment::write_file(summary_path_for(cfg.output), summary_csv);
  }
  if (!opt.quiet) {
    std::fputs(summary_csv.c_str(), stdout);
    std::fprintf(stdout, "wrote %zu rows to %s\n", rows.size(), cfg.output.c_str());
  }
  return 0;
}

void print_oracle(const fedsim::TheoryInputs& in, int check_trials) {
  namespace th = fedsim::theory;
  auto clean = th::lambda_star_clean(in);
  auto adv = th::lambda_star_adversarial(in);
  auto print_star = [](const char* name, const fedsim::LambdaStar& s) {
    if (s.use_global) {
      std::printf("%s=global\n", name);
    } else {
      std::printf("%s=%.17g\n", name, s.value);
    }
  };
  print_star("lambda_star_clean", clean);
  print_star("lambda_star_adversarial", adv);
  double var = th::posterior_variance(in);
  std::printf("posterior_variance=%.17g\n", var);
  auto post = th::bayes_posterior_pe(in, 1.0, 0.0);
  std::printf("weight_self=%.17g\n", post.weight_self);
  std::printf("weight_rest=%.17g\n", post.weight_rest);
  auto [err, errvar] = th::predicted_error_and_variance(in);
  std::printf("predicted_error=%.17g\n", err);
  std::printf("predicted_error_variance=%.17g\n", errvar);

  if (check_trials > 0) {
    fedsim::RngStream rng(12345);
    auto report = th::mmse_equivalence_check(in, check_trials, rng);
    std::printf("mmse_gap_at_star=%.17g\n", report.max_gap_at_star);
    std::printf("mmse_gap_off_star=%.17g\n", report.max_gap_off_star);
    if (in.beta > 0 && in.n >= in.d) {
      fedsim::RngStream rng_lr(54321);
      auto lr = th::mmse_equivalence_check_lr(in, check_trials, rng_lr);
      std::printf("mmse_gap_at_star_linreg=%.17g\n", lr.max_gap_at_star);
      std::printf("mmse_gap_off_star_linreg=%.17g\n", lr.max_gap_off_star);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated training simulator with personalization and robust aggregation"};
  app.require_subcommand(1);

  RunOptions opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", opt.config_path, "JSON experiment config")->required();
    sub->add_option("--out", opt.out_override, "output CSV path (overrides config)");
    sub->add_option("--seed", opt.seed_override, "master seed (overrides config)");
    sub->add_option("--trials", opt.trials_override, "trial count (overrides config)");
    sub->add_option("--workers", opt.workers, "worker threads (default FEDSIM_WORKERS or all cores)");
    sub->add_flag("--quiet", opt.quiet, "suppress the stdout summary");
  };

  CLI::App* run = app.add_subcommand("run", "run the configured experiment once");
  add_common(run);

  CLI::App* sweep = app.add_subcommand("sweep", "run across a lambda grid, with summary CSV");
  add_common(sweep);
  sweep->add_option("--grid", opt.grid, "lambda values")->delimiter(',');

  fedsim::TheoryInputs oracle_in;
  int check_trials = 0;
  CLI::App* oracle = app.add_subcommand("oracle", "print closed-form reference values");
  oracle->add_option("--K", oracle_in.K, "devices");
  oracle->add_option("--K_a", oracle_in.K_a, "adversarial devices");
  oracle->add_option("--n", oracle_in.n, "samples per device");
  oracle->add_option("--sigma", oracle_in.sigma, "observation noise");
  oracle->add_option("--tau", oracle_in.tau, "benign parameter spread");
  oracle->add_option("--tau_a", oracle_in.tau_a, "adversarial parameter spread");
  oracle->add_option("--d", oracle_in.d, "parameter dimension");
  oracle->add_option("--beta", oracle_in.beta, "design scale (0 = point estimation)");
  oracle->add_option("--check", check_trials,
                     "also verify the posterior-mean identity on this many random tuples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) return do_run(opt, false);
    if (sweep->parsed()) return do_run(opt, true);
    if (oracle->parsed()) {
      if (oracle_in.tau_a <= 0) oracle_in.tau_a = oracle_in.tau;
      print_oracle(oracle_in, check_trials);
      return 0;
    }
  } catch (const fedsim::DivergenceError& e) {
    std::fprintf(stderr, "error: training diverged at round %d, device %d: %s\n", e.round,
                 e.device, e.what());
    return kExitDiverged;
  } catch (const fedsim::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDiverged;
  } catch (const fedsim::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const fedsim::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const fedsim::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitGeneric;
  }
  return 0;
}
