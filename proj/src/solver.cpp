#include "fedsim/solver.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fedsim/losses.hpp"

namespace fedsim::ditto {

namespace {

void check_cfg(const SolverConfig& cfg) {
  if (cfg.rounds < 0) throw ConfigError("solver: rounds must be nonnegative");
  if (cfg.sample_fraction <= 0 || cfg.sample_fraction > 1) {
    throw ConfigError("solver: sample_fraction must be in (0, 1]");
  }
  if (cfg.global_local_iters < 0 || cfg.personal_iters < 0) {
    throw ConfigError("solver: iteration counts must be nonnegative");
  }
  if (cfg.eta_global <= 0) throw ConfigError("solver: eta_global must be positive");
  if (cfg.batch_size < 0) throw ConfigError("solver: batch_size must be nonnegative");
}

// Consecutive mini-batches over a reshuffled index order; full-batch mode
// never touches the stream.
class BatchPlan {
 public:
  BatchPlan(int n, int batch_size, RngStream rng)
      : n_(n), batch_(batch_size <= 0 || batch_size >= n ? 0 : batch_size), rng_(std::move(rng)) {
    if (batch_ == 0) {
      rows_.resize(n_);
      std::iota(rows_.begin(), rows_.end(), 0);
    }
  }

  std::span<const int> next() {
    if (batch_ == 0) return rows_;
    if (cursor_ + batch_ > static_cast<int>(order_.size())) {
      order_.resize(n_);
      std::iota(order_.begin(), order_.end(), 0);
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    std::span<const int> out(order_.data() + cursor_, static_cast<std::size_t>(batch_));
    cursor_ += batch_;
    return out;
  }

 private:
  int n_;
  int batch_;
  RngStream rng_;
  std::vector<int> rows_;   // full-batch case
  std::vector<int> order_;  // mini-batch case
  int cursor_ = 0;
};

int num_selected(const SolverConfig& cfg, int K) {
  return std::max(1, static_cast<int>(std::ceil(cfg.sample_fraction * K)));
}

}  // namespace

TrainState init_state(const Population& pop) {
  if (pop.devices.empty()) throw ConfigError("solver: empty population");
  TrainState st;
  st.global = Vector::Zero(pop.dim);
  for (const auto& dev : pop.devices) {
    if (dev.personalized.size() != pop.dim) {
      throw DimensionError("solver: device personal state has wrong dimension");
    }
    st.personalized.push_back(dev.personalized);
  }
  st.personal_steps.assign(pop.devices.size(), 0);
  return st;
}

double effective_personal_eta(const SolverConfig& cfg, double lambda) {
  double eta = cfg.eta_personal > 0 ? cfg.eta_personal : cfg.eta_global;
  return std::min(eta, 1.0 / (1.0 + lambda));
}

double decayed_personal_eta(std::int64_t t, double mu, double lambda, double p_k) {
  if (p_k <= 0) throw ConfigError("decayed step: p_k must be positive");
  if (mu + lambda <= 0) throw ConfigError("decayed step: mu + lambda must be positive");
  return 2.0 / ((static_cast<double>(t) + 1.0) * (mu + lambda) * p_k);
}

void personal_step(Vector& v, const Vector& w_ref, double lambda, double eta,
                   const LossKind& kind, const LocalDataset& train,
                   std::span<const int> rows) {
  if (lambda < 0) throw ConfigError("personal step: lambda must be nonnegative");
  Vector g = models::grad_batch(kind, v, train, rows);
  v -= eta * (g + lambda * (v - w_ref));
}

RoundRecord ditto_round(TrainState& state, const Population& pop, const AttackSpec& attack,
                        const AggregatorSpec& agg, const SolverConfig& cfg,
                        std::span<const double> lambda_per_device, std::uint64_t run_seed) {
  check_cfg(cfg);
  const int K = pop.size();
  if (static_cast<int>(lambda_per_device.size()) != K) {
    throw DimensionError("ditto_round: one lambda per device required");
  }
  const int round = state.round;
  const int m = num_selected(cfg, K);
  auto selected = RngStream::derive(run_seed, "select", round, 0)
                      .sample_without_replacement(K, m);

  std::vector<RoundUpdate> updates;
  updates.reserve(selected.size());
  for (int k : selected) {
    const Device& dev = pop.devices[k];
    const double lambda = lambda_per_device[k];
    const bool random_attacker =
        dev.byzantine && attack.variant == AttackVariant::RandomUpdate;
    const bool replacement_attacker =
        dev.byzantine && attack.variant == AttackVariant::ModelReplacement;

    double reported_loss;
    Vector delta;
    if (random_attacker) {
      RngStream astream = RngStream::derive(run_seed, "attack", round, k);
      delta = attacks::random_update(pop.dim, attack.sigma_attack, astream);
      reported_loss =
          attack.lie_about_loss ? 0.0 : models::loss(pop.task, state.global, dev.train);
    } else {
      reported_loss = models::loss(pop.task, state.global, dev.train);
      if (dev.byzantine && attack.lie_about_loss) reported_loss = 0.0;

      // Local steps on a copy of the shared model.
      Vector w_k = state.global;
      BatchPlan gplan(static_cast<int>(dev.train.n()), cfg.batch_size,
                      RngStream::derive(run_seed, "gbatch", round, k));
      for (int it = 0; it < cfg.global_local_iters; ++it) {
        Vector g = models::grad_batch(pop.task, w_k, dev.train, gplan.next());
        w_k -= cfg.eta_global * g;
      }
      delta = w_k - state.global;
      if (replacement_attacker) {
        delta = attacks::scale_replacement(delta,
                                           attacks::resolve_boost(attack.boost, m));
      }

      // Personal proximal steps; pure attackers skip theirs.
      if (!replacement_attacker) {
        Vector& v = state.personalized[k];
        BatchPlan pplan(static_cast<int>(dev.train.n()), cfg.batch_size,
                        RngStream::derive(run_seed, "pbatch", round, k));
        for (int it = 0; it < cfg.personal_iters; ++it) {
          double eta = cfg.decaying_personal_eta
                           ? decayed_personal_eta(state.personal_steps[k], cfg.mu,
                                                  lambda, cfg.sample_fraction)
                           : effective_personal_eta(cfg, lambda);
          personal_step(v, state.global, lambda, eta, pop.task, dev.train, pplan.next());
          ++state.personal_steps[k];
        }
        if (!all_finite(v)) {
          throw DivergenceError("personal model diverged", round, dev.id);
        }
      }
    }
    if (!all_finite(delta) || !std::isfinite(reported_loss)) {
      throw DivergenceError("device update diverged", round, dev.id);
    }
    updates.push_back(RoundUpdate{dev.id, std::move(delta),
                                  reported_loss,
                                  0.0});
    updates.back().norm = updates.back().delta.norm();
  }

  double loss_sum = 0;
  for (const auto& u : updates) loss_sum += u.train_loss;
  Vector step = aggregate::aggregate(agg, updates, pop.adversary_fraction());
  state.global += step;
  if (!all_finite(state.global)) {
    throw DivergenceError("global model diverged", round, -1);
  }
  ++state.round;
  return RoundRecord{round, step.norm(), loss_sum / static_cast<double>(updates.size())};
}

namespace {

// Core loop shared by the fixed-lambda joint run and the global-only run.
FitResult run_rounds(const Population& pop, const AttackSpec& attack,
                     const AggregatorSpec& agg, const SolverConfig& cfg,
                     const std::vector<double>& lambdas, std::uint64_t run_seed) {
  TrainState st = init_state(pop);
  FitResult out;
  for (int t = 0; t < cfg.rounds; ++t) {
    RoundRecord rec = ditto_round(st, pop, attack, agg, cfg, lambdas, run_seed);
    out.history.push_back(rec);
    if (cfg.stop_tol > 0 && rec.global_step_norm <= cfg.stop_tol) break;
  }
  out.personalized = std::move(st.personalized);
  out.global = std::move(st.global);
  out.rounds_run = st.round;
  return out;
}

double validation_loss(const Population& pop, const Device& dev, const Vector& model) {
  return models::loss(pop.task, model, dev.validation);
}

std::vector<double> sorted_candidates(const LambdaPolicy& policy) {
  auto c = policy.strong_attack ? policy.strong_candidates : policy.weak_candidates;
  std::sort(c.begin(), c.end());
  if (c.empty()) throw ConfigError("dynamic lambda: empty candidate set");
  return c;
}

}  // namespace

double select_lambda(const Device& dev, std::span<const double> candidates,
                     double fallback, const std::function<double(double)>& val_metric) {
  if (candidates.empty()) throw ConfigError("select_lambda: empty candidate set");
  if (dev.validation.n() < 5) return fallback;
  std::vector<double> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  double best = sorted.front();
  double best_val = val_metric(best);
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    double v = val_metric(sorted[i]);
    if (v < best_val) {  // strict: ties keep the smaller lambda
      best_val = v;
      best = sorted[i];
    }
  }
  return best;
}

FitResult run_joint(const Population& pop, const AttackSpec& attack,
                    const AggregatorSpec& agg, const SolverConfig& cfg,
                    const LambdaPolicy& lambda, std::uint64_t run_seed) {
  const int K = pop.size();
  if (lambda.kind == LambdaPolicy::Kind::Fixed) {
    if (lambda.value < 0) throw ConfigError("lambda must be nonnegative");
    FitResult out = run_rounds(pop, attack, agg, cfg,
                               std::vector<double>(K, lambda.value), run_seed);
    out.lambda_used.assign(K, lambda.value);
    return out;
  }

  // Dynamic: train every candidate, each device keeps the one with the best
  // validation loss (the shared-model trajectory is the same in every
  // candidate run because updates never depend on the personal models).
  auto candidates = sorted_candidates(lambda);
  double fallback = lambda.strong_attack ? lambda.strong_fallback : lambda.weak_fallback;
  std::vector<double> trained = candidates;
  bool fallback_needed = std::find(trained.begin(), trained.end(), fallback) == trained.end() &&
                         std::any_of(pop.devices.begin(), pop.devices.end(),
                                     [](const Device& d) { return d.validation.n() < 5; });
  if (fallback_needed) trained.push_back(fallback);

  std::map<double, FitResult> fits;
  for (double c : trained) {
    fits.emplace(c, run_rounds(pop, attack, agg, cfg, std::vector<double>(K, c), run_seed));
  }
  FitResult out;
  const FitResult& first = fits.at(trained.front());
  out.global = first.global;
  out.history = first.history;
  out.rounds_run = first.rounds_run;
  out.personalized.resize(K);
  out.lambda_used.resize(K);
  for (int k = 0; k < K; ++k) {
    const Device& dev = pop.devices[k];
    auto metric = [&](double lam) {
      return validation_loss(pop, dev, fits.at(lam).personalized[k]);
    };
    double chosen = select_lambda(dev, candidates, fallback, metric);
    out.lambda_used[k] = chosen;
    out.personalized[k] = fits.at(chosen).personalized[k];
  }
  return out;
}

FitResult run_global_only(const Population& pop, const AttackSpec& attack,
                          const AggregatorSpec& agg, const SolverConfig& cfg,
                          std::uint64_t run_seed) {
  SolverConfig global_cfg = cfg;
  global_cfg.personal_iters = 0;
  FitResult out = run_rounds(pop, attack, agg, global_cfg,
                             std::vector<double>(pop.size(), 0.0), run_seed);
  for (auto& v : out.personalized) v = out.global;
  return out;
}

FitResult run_finetune(const Population& pop, const AttackSpec& attack,
                       const AggregatorSpec& agg, const SolverConfig& cfg,
                       const LambdaPolicy& lambda, int finetune_epochs,
                       std::uint64_t run_seed) {
  if (finetune_epochs < 0) throw ConfigError("finetune_epochs must be nonnegative");
  FitResult base = run_global_only(pop, attack, agg, cfg, run_seed);
  const int K = pop.size();

  auto finetune_device = [&](int k, double lam) {
    const Device& dev = pop.devices[k];
    Vector v = base.global;  // personalization starts from the trained shared model
    double eta = effective_personal_eta(cfg, lam);
    BatchPlan plan(static_cast<int>(dev.train.n()), cfg.batch_size,
                   RngStream::derive(run_seed, "finetune", 0, k));
    int n = static_cast<int>(dev.train.n());
    int steps_per_epoch =
        (cfg.batch_size <= 0 || cfg.batch_size >= n) ? 1 : (n + cfg.batch_size - 1) / cfg.batch_size;
    for (int e = 0; e < finetune_epochs; ++e) {
      for (int sstep = 0; sstep < steps_per_epoch; ++sstep) {
        personal_step(v, base.global, lam, eta, pop.task, dev.train, plan.next());
      }
    }
    if (!all_finite(v)) throw DivergenceError("finetune diverged", -1, dev.id);
    return v;
  };

  FitResult out;
  out.global = base.global;
  out.history = std::move(base.history);
  out.rounds_run = base.rounds_run;
  out.personalized.resize(K);
  out.lambda_used.resize(K);
  if (lambda.kind == LambdaPolicy::Kind::Fixed) {
    if (lambda.value < 0) throw ConfigError("lambda must be nonnegative");
    for (int k = 0; k < K; ++k) {
      out.personalized[k] = finetune_device(k, lambda.value);
      out.lambda_used[k] = lambda.value;
    }
    return out;
  }
  auto candidates = sorted_candidates(lambda);
  double fallback = lambda.strong_attack ? lambda.strong_fallback : lambda.weak_fallback;
  for (int k = 0; k < K; ++k) {
    const Device& dev = pop.devices[k];
    std::map<double, Vector> tuned;
    for (double c : candidates) tuned[c] = finetune_device(k, c);
    auto metric = [&](double lam) { return validation_loss(pop, dev, tuned.at(lam)); };
    double chosen = select_lambda(dev, candidates, fallback, metric);
    out.lambda_used[k] = chosen;
    auto it = tuned.find(chosen);
    out.personalized[k] = it != tuned.end() ? it->second : finetune_device(k, chosen);
  }
  return out;
}

FitResult run_local_only(const Population& pop, const SolverConfig& cfg,
                         std::uint64_t run_seed) {
  check_cfg(cfg);
  const int K = pop.size();
  TrainState st = init_state(pop);
  FitResult out;
  for (int t = 0; t < cfg.rounds; ++t) {
    auto selected = RngStream::derive(run_seed, "select", t, 0)
                        .sample_without_replacement(K, num_selected(cfg, K));
    for (int k : selected) {
      const Device& dev = pop.devices[k];
      Vector& v = st.personalized[k];
      BatchPlan pplan(static_cast<int>(dev.train.n()), cfg.batch_size,
                      RngStream::derive(run_seed, "pbatch", t, k));
      for (int it = 0; it < cfg.personal_iters; ++it) {
        double eta = cfg.decaying_personal_eta
                         ? decayed_personal_eta(st.personal_steps[k], cfg.mu, 0.0,
                                                cfg.sample_fraction)
                         : effective_personal_eta(cfg, 0.0);
        personal_step(v, st.global, 0.0, eta, pop.task, dev.train, pplan.next());
        ++st.personal_steps[k];
      }
      if (!all_finite(v)) throw DivergenceError("local model diverged", t, dev.id);
    }
    out.history.push_back(RoundRecord{t, 0.0, 0.0});
  }
  out.personalized = std::move(st.personalized);
  out.global = std::move(st.global);
  out.rounds_run = cfg.rounds;
  return out;
}

}  // namespace fedsim::ditto
