#include "fedsim/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fedsim::aggregate {

namespace {

void check_updates(const std::vector<RoundUpdate>& updates) {
  if (updates.empty()) throw ConfigError("aggregate: no updates");
  Eigen::Index dim = updates.front().delta.size();
  for (const auto& u : updates) {
    if (u.delta.size() != dim) throw DimensionError("aggregate: mixed update dimensions");
    require_finite(u.delta, "update delta (device " + std::to_string(u.device) + ")");
    if (!std::isfinite(u.train_loss)) {
      throw NumericError("non-finite reported loss (device " + std::to_string(u.device) + ")");
    }
  }
}

// Indices sorted so the chosen key is descending with ascending device id on ties.
template <typename Key>
std::vector<int> order_desc_by(const std::vector<RoundUpdate>& updates, Key key) {
  std::vector<int> idx(updates.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (key(updates[a]) != key(updates[b])) return key(updates[a]) > key(updates[b]);
    return updates[a].device < updates[b].device;
  });
  return idx;
}

}  // namespace

Vector agg_mean(const std::vector<RoundUpdate>& updates,
                const std::optional<std::vector<double>>& weights) {
  check_updates(updates);
  const std::size_t m = updates.size();
  Vector out = Vector::Zero(updates.front().delta.size());
  if (!weights) {
    for (const auto& u : updates) out += u.delta;
    return out / static_cast<double>(m);
  }
  if (weights->size() != m) throw DimensionError("agg_mean: weights/updates size mismatch");
  double total = 0;
  for (double w : *weights) {
    if (w < 0 || !std::isfinite(w)) throw ConfigError("agg_mean: weights must be finite and nonnegative");
    total += w;
  }
  if (total <= 0) throw ConfigError("agg_mean: weights sum to zero");
  for (std::size_t i = 0; i < m; ++i) out += ((*weights)[i] / total) * updates[i].delta;
  return out;
}

Vector agg_coord_median(const std::vector<RoundUpdate>& updates) {
  check_updates(updates);
  const std::size_t m = updates.size();
  Vector out(updates.front().delta.size());
  std::vector<double> col(m);
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    for (std::size_t i = 0; i < m; ++i) col[i] = updates[i].delta[j];
    std::sort(col.begin(), col.end());
    out[j] = (m % 2 == 1) ? col[m / 2] : 0.5 * (col[m / 2 - 1] + col[m / 2]);
  }
  return out;
}

std::vector<double> krum_scores(const std::vector<RoundUpdate>& updates, int f) {
  check_updates(updates);
  const int m = static_cast<int>(updates.size());
  if (f < 0) throw ConfigError("krum: f must be nonnegative");
  if (m < f + 3) throw ConfigError("krum: needs at least f + 3 updates");
  const int neighbors = m - f - 2;
  std::vector<double> scores(m);
  std::vector<double> dists;
  dists.reserve(m - 1);
  for (int i = 0; i < m; ++i) {
    dists.clear();
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      dists.push_back((updates[i].delta - updates[j].delta).squaredNorm());
    }
    std::partial_sort(dists.begin(), dists.begin() + neighbors, dists.end());
    scores[i] = std::accumulate(dists.begin(), dists.begin() + neighbors, 0.0);
  }
  return scores;
}

int krum_select(const std::vector<RoundUpdate>& updates, int f) {
  auto scores = krum_scores(updates, f);
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
    if (scores[i] < scores[best] ||
        (scores[i] == scores[best] && updates[i].device < updates[best].device)) {
      best = i;
    }
  }
  return best;
}

Vector agg_multi_krum(const std::vector<RoundUpdate>& updates, int f) {
  auto scores = krum_scores(updates, f);
  const int m = static_cast<int>(updates.size());
  const int keep = m - f;
  // Lowest score first; ties keep the lower device id.
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return updates[a].device < updates[b].device;
  });
  Vector out = Vector::Zero(updates.front().delta.size());
  for (int i = 0; i < keep; ++i) out += updates[idx[i]].delta;
  return out / static_cast<double>(keep);
}

Vector agg_clipping(const std::vector<RoundUpdate>& updates) {
  check_updates(updates);
  const std::size_t m = updates.size();
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) norms[i] = updates[i].delta.norm();
  std::vector<double> sorted = norms;
  std::sort(sorted.begin(), sorted.end());
  double threshold = (m % 2 == 1) ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  Vector out = Vector::Zero(updates.front().delta.size());
  for (std::size_t i = 0; i < m; ++i) {
    double scale = (norms[i] > threshold && norms[i] > 0) ? threshold / norms[i] : 1.0;
    out += scale * updates[i].delta;
  }
  return out / static_cast<double>(m);
}

Vector agg_k_norm(const std::vector<RoundUpdate>& updates, int k) {
  check_updates(updates);
  const int m = static_cast<int>(updates.size());
  if (k < 0 || k >= m) throw ConfigError("k_norm: need 0 <= k < m");
  auto idx = order_desc_by(updates, [](const RoundUpdate& u) { return u.delta.norm(); });
  Vector out = Vector::Zero(updates.front().delta.size());
  for (int i = k; i < m; ++i) out += updates[idx[i]].delta;
  return out / static_cast<double>(m - k);
}

Vector agg_k_loss(const std::vector<RoundUpdate>& updates, int k) {
  check_updates(updates);
  const int m = static_cast<int>(updates.size());
  if (k < 0 || k >= m) throw ConfigError("k_loss: need 0 <= k < m");
  auto idx = order_desc_by(updates, [](const RoundUpdate& u) { return u.train_loss; });
  // Keep exactly the (k+1)-th largest reported loss.
  return updates[idx[k]].delta;
}

Vector agg_tilted(const std::vector<RoundUpdate>& updates, double t) {
  check_updates(updates);
  if (!std::isfinite(t)) throw ConfigError("tilted: t must be finite");
  const std::size_t m = updates.size();
  // softmax(t * loss), stabilized by subtracting the max exponent.
  double zmax = -std::numeric_limits<double>::infinity();
  for (const auto& u : updates) zmax = std::max(zmax, t * u.train_loss);
  double denom = 0;
  std::vector<double> w(m);
  for (std::size_t i = 0; i < m; ++i) {
    w[i] = std::exp(t * updates[i].train_loss - zmax);
    denom += w[i];
  }
  Vector out = Vector::Zero(updates.front().delta.size());
  for (std::size_t i = 0; i < m; ++i) out += (w[i] / denom) * updates[i].delta;
  return out;
}

int resolve_budget(const std::optional<int>& explicit_value, double adversary_fraction,
                   int num_selected) {
  if (explicit_value) return *explicit_value;
  return static_cast<int>(std::lround(adversary_fraction * num_selected));
}

Vector aggregate(const AggregatorSpec& spec, const std::vector<RoundUpdate>& updates,
                 double adversary_fraction) {
  const int m = static_cast<int>(updates.size());
  switch (spec.variant) {
    case AggVariant::Mean:
      return agg_mean(updates, spec.mean_weights);
    case AggVariant::CoordMedian:
      return agg_coord_median(updates);
    case AggVariant::Krum:
      return updates[krum_select(updates, resolve_budget(spec.f, adversary_fraction, m))].delta;
    case AggVariant::MultiKrum:
      return agg_multi_krum(updates, resolve_budget(spec.f, adversary_fraction, m));
    case AggVariant::Clipping:
      return agg_clipping(updates);
    case AggVariant::KNorm:
      return agg_k_norm(updates, resolve_budget(spec.k, adversary_fraction, m));
    case AggVariant::KLoss:
      return agg_k_loss(updates, resolve_budget(spec.k, adversary_fraction, m));
    case AggVariant::Tilted:
      return agg_tilted(updates, spec.tilt);
  }
  throw ConfigError("aggregate: unknown variant");
}

}  // namespace fedsim::aggregate
