#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedsim/aggregate.hpp"
#include "fedsim/attacks.hpp"
#include "fedsim/datagen.hpp"

namespace fedsim {

// How each device's interpolation strength lambda is chosen.
struct LambdaPolicy {
  enum class Kind { Fixed, Dynamic } kind = Kind::Fixed;
  double value = 1.0;    // Fixed
  bool strong_attack = false;  // Dynamic: which candidate set / fallback applies
  std::vector<double> strong_candidates{0.05, 0.1, 0.2};
  std::vector<double> weak_candidates{0.1, 1.0, 2.0};
  double strong_fallback = 0.1;
  double weak_fallback = 1.0;
};

struct SolverConfig {
  int rounds = 100;
  double sample_fraction = 1.0;  // |S_t| = ceil(fraction * K), without replacement
  int global_local_iters = 1;    // r: local steps on the shared model
  int personal_iters = 1;        // s: steps on the personal model
  double eta_global = 0.1;
  double eta_personal = 0.0;  // <= 0 means "same as eta_global"
  int batch_size = 0;         // 0 = full batch
  double stop_tol = 0.0;      // > 0: stop once |w_{t+1} - w_t| <= stop_tol
  // Decaying schedule eta_t = 2 / ((t+1)(mu + lambda) p_k), t counting a
  // device's personal steps. Used by the convergence-rate analysis; the
  // default is the constant step above.
  bool decaying_personal_eta = false;
  double mu = 1.0;  // strong convexity constant entering the schedule
};

struct RoundRecord {
  int round = 0;
  double global_step_norm = 0.0;
  double mean_reported_loss = 0.0;
};

struct FitResult {
  std::vector<Vector> personalized;  // one model per device
  Vector global;
  std::vector<double> lambda_used;  // per device (empty for global/local baselines)
  std::vector<RoundRecord> history;
  int rounds_run = 0;
};

struct TrainState {
  Vector global;
  std::vector<Vector> personalized;
  int round = 0;
  std::vector<std::int64_t> personal_steps;  // per device, feeds the decaying schedule
};

namespace ditto {

TrainState init_state(const Population& pop);

// One communication round: sample devices, let each compute a shared-model
// update (adversaries substitute theirs), take personal proximal steps,
// aggregate, advance the global model. Devices not selected this round keep
// their personal state untouched. Returns the round's record.
RoundRecord ditto_round(TrainState& state, const Population& pop, const AttackSpec& attack,
                        const AggregatorSpec& agg, const SolverConfig& cfg,
                        std::span<const double> lambda_per_device, std::uint64_t run_seed);

// Full bi-level run: shared model trained across devices, personal models
// trained against it. Dynamic lambda trains every candidate and lets each
// device keep the one with the best validation loss.
FitResult run_joint(const Population& pop, const AttackSpec& attack,
                    const AggregatorSpec& agg, const SolverConfig& cfg,
                    const LambdaPolicy& lambda, std::uint64_t run_seed);

// Train the shared model only, then locally minimize
// F_k(v) + lambda/2 |v - w_T|^2 for finetune_epochs passes, starting from w_T.
FitResult run_finetune(const Population& pop, const AttackSpec& attack,
                       const AggregatorSpec& agg, const SolverConfig& cfg,
                       const LambdaPolicy& lambda, int finetune_epochs,
                       std::uint64_t run_seed);

// Baselines. Global: shared model only (every device evaluated at it).
// Local: no communication, each device descends its own loss; attacks do not
// apply (there is nothing to corrupt in transit).
FitResult run_global_only(const Population& pop, const AttackSpec& attack,
                          const AggregatorSpec& agg, const SolverConfig& cfg,
                          std::uint64_t run_seed);
FitResult run_local_only(const Population& pop, const SolverConfig& cfg,
                         std::uint64_t run_seed);

// Candidate choice for one device. val_metric maps a candidate lambda to the
// device's validation loss under it. Fewer than 5 validation points fall
// back to the regime's default; ties prefer the smaller lambda.
double select_lambda(const Device& dev, std::span<const double> candidates,
                     double fallback, const std::function<double(double)>& val_metric);

// One personal proximal step: v -= eta (grad F_k(v; rows) + lambda (v - w_ref)).
void personal_step(Vector& v, const Vector& w_ref, double lambda, double eta,
                   const LossKind& kind, const LocalDataset& train,
                   std::span<const int> rows);

double decayed_personal_eta(std::int64_t t, double mu, double lambda, double p_k);

// Constant-step mode caps the personal step at 1/(1 + lambda) so the
// proximal term cannot destabilize the iteration at large lambda.
double effective_personal_eta(const SolverConfig& cfg, double lambda);

}  // namespace ditto
}  // namespace fedsim
