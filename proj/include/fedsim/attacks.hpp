#pragma once

#include <span>

#include "fedsim/core.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class AttackVariant {
  None,
  LabelPoison,       // corrupt labels at data-construction time, features untouched
  RandomUpdate,      // send delta ~ N(0, sigma_attack^2 I) instead of training
  ModelReplacement,  // train honestly on poisoned data, then boost the delta
};

struct BoostPolicy {
  enum class Kind { NumSelected, Fixed } kind = Kind::NumSelected;
  double value = 1.0;  // Fixed only
};

struct AttackSpec {
  AttackVariant variant = AttackVariant::None;
  double sigma_attack = 1.0;
  BoostPolicy boost;
  // Adversaries report train_loss = 0 instead of the honest value, to dodge
  // loss-ranking defenses.
  bool lie_about_loss = false;
  // Fraction of devices that are adversarial. For synthetic populations the
  // exact count lives in the data spec; this is used for CSV populations and
  // for sizing robust-aggregation parameters.
  double adversary_fraction = 0.0;
};

namespace attacks {

// Replace labels in place: with a 2-symbol alphabet every label flips to the
// other symbol (no randomness consumed); otherwise labels are redrawn
// uniformly over the alphabet. Features are never touched.
void poison_labels(LocalDataset& data, std::span<const double> alphabet, RngStream& rng);
// Alphabet inferred from the dataset's own distinct labels.
void poison_labels(LocalDataset& data, RngStream& rng);

Vector random_update(int dim, double sigma_attack, RngStream& rng);

// boost * delta. Finite-ness of the result is the caller's aggregation-time check.
Vector scale_replacement(const Vector& delta, double boost);

double resolve_boost(const BoostPolicy& policy, int num_selected);

}  // namespace attacks
}  // namespace fedsim
