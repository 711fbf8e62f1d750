#pragma once

#include <span>

#include "fedsim/core.hpp"

namespace fedsim {

enum class LossType { PointEstimation, LinReg, HingeSvm, Logistic };

// Loss family plus its L2 regularization weight (classification only; keep 0
// to match the closed-form linear-model analysis).
struct LossKind {
  LossType type = LossType::PointEstimation;
  double reg = 0.0;
};

namespace models {

// Conventions:
//  - point estimation: F(v) = 1/2 |v - mean(x_i)|^2 over the rows used
//  - linear regression: F(w) = 1/(2n) |Xw - y|^2  (half mean squared residual)
//  - hinge svm: F(w) = 1/n sum max(0, 1 - y_i x_i.w) + reg/2 |w|^2, labels +-1
//  - logistic: F(w) = 1/n sum log(1 + exp(-y_i x_i.w)) + reg/2 |w|^2, labels +-1
double loss(const LossKind& kind, const Vector& params, const LocalDataset& data);
Vector grad(const LossKind& kind, const Vector& params, const LocalDataset& data);

// Same, restricted to a row subset (mini-batches).
double loss_batch(const LossKind& kind, const Vector& params,
                  const LocalDataset& data, std::span<const int> rows);
Vector grad_batch(const LossKind& kind, const Vector& params,
                  const LocalDataset& data, std::span<const int> rows);

// Exact minimizer of the local objective. Supported for point estimation
// (the sample mean) and linear regression (least squares; throws DataError on
// a singular design). Throws ConfigError for the classification losses.
Vector local_minimizer(const LossKind& kind, const LocalDataset& data);

// The hinge subgradient at margin exactly 1 contributes 0; ties on the kink
// are resolved toward the flat side.

}  // namespace models
}  // namespace fedsim
