#pragma once

#include <Eigen/Dense>
#include <string_view>
#include <vector>

#include "fedsim/error.hpp"

namespace fedsim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// y + a*x with an explicit shape check.
Vector axpy(double a, const Vector& x, const Vector& y);

bool all_finite(const Vector& v);

// Throws NumericError naming `what` if v has a NaN/Inf entry.
void require_finite(const Vector& v, std::string_view what);

// One device's local data. `features` is n x d. `labels` may be empty for
// label-free tasks (point estimation keeps its observations in `features`).
struct LocalDataset {
  Matrix features;
  Vector labels;

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  bool has_labels() const { return labels.size() > 0; }
};

// A participant. `byzantine` is fixed at construction; adversarial conduct is
// decided elsewhere, this flag only marks who gets excluded from benign
// metrics (and who the attack hooks apply to).
struct Device {
  int id = 0;
  LocalDataset train;
  LocalDataset validation;
  LocalDataset test;
  Vector personalized;  // initial per-device model state, carried across rounds
  bool byzantine = false;
  double p_k = 1.0;  // selection probability
};

// What a selected device hands the server each round. `train_loss` is the
// device-reported loss of the incoming global model on its training split;
// robust aggregation rules are allowed to read it (and adversaries to lie
// about it). `norm` caches |delta|_2.
struct RoundUpdate {
  int device = 0;
  Vector delta;
  double train_loss = 0.0;
  double norm = 0.0;
};

}  // namespace fedsim
