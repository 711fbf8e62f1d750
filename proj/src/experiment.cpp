#include "fedsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "fedsim/attacks.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/solver.hpp"

namespace fedsim::experiment {

namespace {

std::string attack_name(AttackVariant v) {
  switch (v) {
    case AttackVariant::None: return "none";
    case AttackVariant::LabelPoison: return "label_poison";
    case AttackVariant::RandomUpdate: return "random_update";
    case AttackVariant::ModelReplacement: return "model_replacement";
  }
  return "?";
}

std::string aggregator_name(AggVariant v) {
  switch (v) {
    case AggVariant::Mean: return "mean";
    case AggVariant::CoordMedian: return "coord_median";
    case AggVariant::Krum: return "krum";
    case AggVariant::MultiKrum: return "multi_krum";
    case AggVariant::Clipping: return "clipping";
    case AggVariant::KNorm: return "k_norm";
    case AggVariant::KLoss: return "k_loss";
    case AggVariant::Tilted: return "tilted";
  }
  return "?";
}

// Shortest decimal string that parses back to exactly v. Keeps the lambda
// column readable (0.1, not 0.10000000000000001) without losing precision.
std::string shortest_exact(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

int resolve_workers() {
  if (const char* env = std::getenv("FEDSIM_WORKERS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void label_for(const LambdaPolicy& lambda, std::string& label, double& sort_key) {
  if (lambda.kind == LambdaPolicy::Kind::Dynamic) {
    label = "dynamic";
    sort_key = HUGE_VAL;
  } else {
    label = shortest_exact(lambda.value);
    sort_key = lambda.value;
  }
}

std::vector<ResultRow> run_trial(const ExperimentConfig& cfg, int trial) {
  std::uint64_t seed = trial_seed(cfg.master_seed, trial);
  Population pop = build_population(cfg, trial);

  std::vector<ResultRow> rows;
  rows.reserve(cfg.methods.size());
  for (Method m : cfg.methods) {
    auto t0 = std::chrono::steady_clock::now();

    ResultRow row;
    row.trial = trial;
    row.attack = attack_name(cfg.attack.variant);
    row.aggregator = aggregator_name(cfg.aggregator.variant);
    row.method = method_name(m);
    row.lambda_sort_key = -HUGE_VAL;  // methods without a lambda sort first
    row.seed = seed;

    EvalReport report;
    switch (m) {
      case Method::Global: {
        FitResult fit = ditto::run_global_only(pop, cfg.attack, cfg.aggregator, cfg.solver, seed);
        report = metrics::evaluate_global(fit.global, pop, cfg.metric);
        break;
      }
      case Method::Local: {
        FitResult fit = ditto::run_local_only(pop, cfg.solver, seed);
        report = metrics::evaluate(fit.personalized, pop, cfg.metric);
        row.aggregator = "none";
        break;
      }
      case Method::DittoJoint: {
        FitResult fit =
            ditto::run_joint(pop, cfg.attack, cfg.aggregator, cfg.solver, cfg.lambda, seed);
        report = metrics::evaluate(fit.personalized, pop, cfg.metric);
        label_for(cfg.lambda, row.lambda_label, row.lambda_sort_key);
        break;
      }
      case Method::DittoFinetune: {
        FitResult fit = ditto::run_finetune(pop, cfg.attack, cfg.aggregator, cfg.solver,
                                            cfg.lambda, cfg.finetune_epochs, seed);
        report = metrics::evaluate(fit.personalized, pop, cfg.metric);
        label_for(cfg.lambda, row.lambda_label, row.lambda_sort_key);
        break;
      }
      case Method::Tilted: {
        AggregatorSpec tilted;
        tilted.variant = AggVariant::Tilted;
        tilted.tilt = cfg.tilt_t;
        FitResult fit = ditto::run_global_only(pop, cfg.attack, tilted, cfg.solver, seed);
        report = metrics::evaluate_global(fit.global, pop, cfg.metric);
        row.aggregator = "tilted";
        break;
      }
    }

    row.benign_mean_loss = report.benign_mean_loss;
    row.benign_std_loss = report.benign_std_loss;
    row.benign_mean_acc = report.benign_mean_acc;
    row.benign_std_acc = report.benign_std_acc;
    if (cfg.record_timings) {
      auto t1 = std::chrono::steady_clock::now();
      row.wall_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// All trials of one concrete configuration, spread over the worker pool.
// Each worker owns whole trials; slots keep the output order independent of
// scheduling.
std::vector<ResultRow> run_cells(const ExperimentConfig& cfg) {
  std::vector<std::vector<ResultRow>> slots(cfg.trials);
  int workers = std::min(resolve_workers(), cfg.trials);

  if (workers <= 1) {
    for (int t = 0; t < cfg.trials; ++t) slots[t] = run_trial(cfg, t);
  } else {
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto work = [&] {
      for (;;) {
        int t = next.fetch_add(1);
        if (t >= cfg.trials || failed.load()) return;
        try {
          slots[t] = run_trial(cfg, t);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  std::vector<ResultRow> rows;
  for (auto& slot : slots) {
    rows.insert(rows.end(), std::make_move_iterator(slot.begin()),
                std::make_move_iterator(slot.end()));
  }
  return rows;
}

void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.trial, a.lambda_sort_key, a.lambda_label, a.method, a.attack) <
           std::tie(b.trial, b.lambda_sort_key, b.lambda_label, b.method, b.attack);
  });
}

bool scenario_has_adversaries(const ExperimentConfig& cfg) {
  switch (cfg.data.kind) {
    case DataConfig::Kind::PointEstimation: return cfg.data.pe.K_a > 0;
    case DataConfig::Kind::LinReg: return cfg.data.lr.K_a > 0;
    case DataConfig::Kind::Csv: return cfg.data.csv.adversary_fraction > 0;
  }
  return false;
}

ExperimentConfig clean_twin(const ExperimentConfig& cfg) {
  ExperimentConfig clean = cfg;
  clean.attack.variant = AttackVariant::None;
  clean.attack.adversary_fraction = 0.0;
  clean.data.pe.K_a = 0;
  clean.data.lr.K_a = 0;
  clean.data.csv.adversary_fraction = 0.0;
  return clean;
}

std::vector<ResultRow> run_scenario_sweep(const ExperimentConfig& cfg,
                                          const std::vector<double>& grid) {
  std::vector<Method> with_lambda, without_lambda;
  for (Method m : cfg.methods) {
    (m == Method::DittoJoint || m == Method::DittoFinetune ? with_lambda : without_lambda)
        .push_back(m);
  }

  std::vector<ResultRow> rows;
  if (!without_lambda.empty()) {
    ExperimentConfig sub = cfg;
    sub.methods = without_lambda;
    auto part = run_cells(sub);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (!with_lambda.empty()) {
    for (double lam : grid) {
      ExperimentConfig sub = cfg;
      sub.methods = with_lambda;
      sub.lambda.kind = LambdaPolicy::Kind::Fixed;
      sub.lambda.value = lam;
      auto part = run_cells(sub);
      rows.insert(rows.end(), part.begin(), part.end());
    }
  }
  return rows;
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t master_seed, int trial) {
  return derive_seed(master_seed, "trial", static_cast<std::uint64_t>(trial), 0);
}

Population build_population(const ExperimentConfig& cfg, int trial) {
  RngStream root(trial_seed(cfg.master_seed, trial));
  Population pop;
  switch (cfg.data.kind) {
    case DataConfig::Kind::PointEstimation:
      pop = datagen::gen_point_estimation(cfg.data.pe, root);
      break;
    case DataConfig::Kind::LinReg:
      pop = datagen::gen_linear_regression(cfg.data.lr, root);
      break;
    case DataConfig::Kind::Csv:
      pop = datagen::load_csv_population(cfg.data.csv_path, cfg.data.csv, root);
      break;
  }

  // Label poisoning happens when the data is assembled, before any training.
  // Only discrete labels can be poisoned this way; for the synthetic
  // regression-style tasks the corruption is already in the generating
  // distribution (tau_a).
  if (cfg.attack.variant == AttackVariant::LabelPoison && pop.label_alphabet.size() >= 2) {
    for (auto& dev : pop.devices) {
      if (!dev.byzantine) continue;
      RngStream stream = root.child("poison", 0, static_cast<std::uint64_t>(dev.id));
      attacks::poison_labels(dev.train, pop.label_alphabet, stream);
    }
  }
  return pop;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
  if (!cfg.sweep_grid.empty()) return sweep_lambda(cfg, cfg.sweep_grid);
  auto rows = run_cells(cfg);
  sort_rows(rows);
  return rows;
}

std::vector<ResultRow> sweep_lambda(const ExperimentConfig& cfg,
                                    const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("sweep needs a nonempty lambda grid");
  auto rows = run_scenario_sweep(cfg, grid);
  // The twin is only added when its rows are tellable apart, i.e. the attack
  // column differs. Data-level contamination with variant "none" would
  // produce twin rows with identical labels.
  if (scenario_has_adversaries(cfg) && cfg.attack.variant != AttackVariant::None &&
      cfg.sweep_include_clean) {
    auto clean_rows = run_scenario_sweep(clean_twin(cfg), grid);
    rows.insert(rows.end(), clean_rows.begin(), clean_rows.end());
  }
  sort_rows(rows);
  return rows;
}

std::vector<SweepSummaryRow> summarize(const std::vector<ResultRow>& rows) {
  // Group by (lambda, attack, method) in first-seen order.
  std::vector<SweepSummaryRow> out;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
  std::vector<std::vector<double>> means, stds;
  for (const auto& row : rows) {
    auto key = std::make_tuple(row.lambda_label, row.attack, row.method);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      SweepSummaryRow s;
      s.lambda_label = row.lambda_label;
      s.attack = row.attack;
      s.method = row.method;
      out.push_back(s);
      means.emplace_back();
      stds.emplace_back();
    }
    means[it->second].push_back(row.benign_mean_loss);
    stds[it->second].push_back(row.benign_std_loss);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto mean_se = [](const std::vector<double>& xs) {
      double mean = 0;
      for (double x : xs) mean += x;
      mean /= xs.size();
      double var = 0;
      for (double x : xs) var += (x - mean) * (x - mean);
      double se = xs.size() > 1 ? std::sqrt(var / (xs.size() - 1) / xs.size()) : 0.0;
      return std::make_pair(mean, se);
    };
    out[i].trials = static_cast<int>(means[i].size());
    std::tie(out[i].mean_benign_loss, out[i].se_benign_loss) = mean_se(means[i]);
    std::tie(out[i].mean_benign_std, out[i].se_benign_std) = mean_se(stds[i]);
  }
  return out;
}

std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

// RFC 4180: quote a field only when it holds a comma, quote or newline.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

}  // namespace

std::string rows_to_csv(const std::vector<ResultRow>& rows) {
  std::string out =
      "trial,lambda,attack,aggregator,method,benign_mean_loss,benign_std_loss,"
      "benign_mean_acc,benign_std_acc,wall_time_ms,seed\n";
  for (const auto& r : rows) {
    out += std::to_string(r.trial);
    out += ',';
    out += csv_field(r.lambda_label);
    out += ',';
    out += csv_field(r.attack);
    out += ',';
    out += csv_field(r.aggregator);
    out += ',';
    out += csv_field(r.method);
    out += ',';
    out += format_float(r.benign_mean_loss);
    out += ',';
    out += format_float(r.benign_std_loss);
    out += ',';
    if (r.benign_mean_acc) out += format_float(*r.benign_mean_acc);
    out += ',';
    if (r.benign_std_acc) out += format_float(*r.benign_std_acc);
    out += ',';
    out += format_float(r.wall_time_ms);
    out += ',';
    out += std::to_string(r.seed);
    out += '\n';
  }
  return out;
}

std::string summary_to_csv(const std::vector<SweepSummaryRow>& rows) {
  std::string out =
      "lambda,attack,method,trials,mean_benign_loss,se_benign_loss,"
      "mean_benign_std,se_benign_std\n";
  for (const auto& r : rows) {
    out += csv_field(r.lambda_label);
    out += ',';
    out += csv_field(r.attack);
    out += ',';
    out += csv_field(r.method);
    out += ',';
    out += std::to_string(r.trials);
    out += ',';
    out += format_float(r.mean_benign_loss);
    out += ',';
    out += format_float(r.se_benign_loss);
    out += ',';
    out += format_float(r.mean_benign_std);
    out += ',';
    out += format_float(r.se_benign_std);
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace fedsim::experiment
