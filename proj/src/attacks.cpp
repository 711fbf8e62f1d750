#include "fedsim/attacks.hpp"

#include <algorithm>
#include <set>
#include <vector>

namespace fedsim::attacks {

void poison_labels(LocalDataset& data, std::span<const double> alphabet, RngStream& rng) {
  if (!data.has_labels()) {
    // Label-free or continuous-parameter tasks carry their corruption in the
    // generating process; there is nothing to rewrite here.
    return;
  }
  if (alphabet.size() < 2) {
    throw DataError("poison_labels: alphabet needs at least 2 symbols");
  }
  if (alphabet.size() == 2) {
    // Binary: deterministic flip to the other symbol.
    for (Eigen::Index i = 0; i < data.labels.size(); ++i) {
      data.labels[i] = data.labels[i] == alphabet[0] ? alphabet[1] : alphabet[0];
    }
    return;
  }
  for (Eigen::Index i = 0; i < data.labels.size(); ++i) {
    data.labels[i] = alphabet[rng.uniform_int(alphabet.size())];
  }
}

void poison_labels(LocalDataset& data, RngStream& rng) {
  std::set<double> distinct;
  for (Eigen::Index i = 0; i < data.labels.size(); ++i) distinct.insert(data.labels[i]);
  std::vector<double> alphabet(distinct.begin(), distinct.end());
  poison_labels(data, alphabet, rng);
}

Vector random_update(int dim, double sigma_attack, RngStream& rng) {
  if (dim < 1) throw DimensionError("random_update: dim must be positive");
  if (sigma_attack < 0) throw ConfigError("random_update: sigma_attack must be nonnegative");
  Vector delta(dim);
  for (int i = 0; i < dim; ++i) delta[i] = rng.normal(0, sigma_attack);
  return delta;
}

Vector scale_replacement(const Vector& delta, double boost) {
  return boost * delta;
}

double resolve_boost(const BoostPolicy& policy, int num_selected) {
  if (policy.kind == BoostPolicy::Kind::NumSelected) {
    return static_cast<double>(num_selected);
  }
  return policy.value;
}

}  // namespace fedsim::attacks
