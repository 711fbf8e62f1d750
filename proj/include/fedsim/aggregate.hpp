#pragma once

#include <optional>
#include <vector>

#include "fedsim/core.hpp"

namespace fedsim {

enum class AggVariant { Mean, CoordMedian, Krum, MultiKrum, Clipping, KNorm, KLoss, Tilted };

struct AggregatorSpec {
  AggVariant variant = AggVariant::Mean;
  // Krum/MultiKrum byzantine budget f, KNorm/KLoss drop count k. When unset
  // they default to round(adversary_fraction * |selected|), resolved per round.
  std::optional<int> f;
  std::optional<int> k;
  double tilt = 1.0;                                // Tilted temperature
  std::optional<std::vector<double>> mean_weights;  // Mean only; normalized
};

namespace aggregate {

// Every rule maps the round's updates to one aggregated delta. All of them
// require at least one update, reject non-finite inputs, and break any
// internal ties by ascending device id.

Vector agg_mean(const std::vector<RoundUpdate>& updates,
                const std::optional<std::vector<double>>& weights = std::nullopt);

// Per-coordinate median; even counts average the two middle values.
Vector agg_coord_median(const std::vector<RoundUpdate>& updates);

// Krum score: sum of squared distances to the m - f - 2 nearest other
// updates. Returns the index (into `updates`) of the minimum-score update.
// Requires m >= f + 3.
int krum_select(const std::vector<RoundUpdate>& updates, int f);
std::vector<double> krum_scores(const std::vector<RoundUpdate>& updates, int f);

// Mean of the m - f lowest-score updates.
Vector agg_multi_krum(const std::vector<RoundUpdate>& updates, int f);

// Norm clipping: threshold = median of update norms, updates above it are
// rescaled onto the threshold, then plain mean.
Vector agg_clipping(const std::vector<RoundUpdate>& updates);

// Drop the k largest-norm updates, mean the rest.
Vector agg_k_norm(const std::vector<RoundUpdate>& updates, int k);

// Keep exactly the update with the (k+1)-th largest reported train loss.
Vector agg_k_loss(const std::vector<RoundUpdate>& updates, int k);

// Weights softmax(t * train_loss), log-sum-exp stabilized; t -> 0 recovers
// the mean, large t concentrates on the highest-loss update.
Vector agg_tilted(const std::vector<RoundUpdate>& updates, double t);

// Dispatch on spec.variant, resolving default f/k from adversary_fraction.
Vector aggregate(const AggregatorSpec& spec, const std::vector<RoundUpdate>& updates,
                 double adversary_fraction);

int resolve_budget(const std::optional<int>& explicit_value, double adversary_fraction,
                   int num_selected);

}  // namespace aggregate
}  // namespace fedsim
