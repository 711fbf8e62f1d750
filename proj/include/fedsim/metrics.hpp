#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fedsim/datagen.hpp"

namespace fedsim {

// What "test performance" means for a run:
//  - TestLoss: average loss on the device's held-out test split
//  - ParamError: squared distance to the device's true parameter (synthetic
//    populations only; this is the quantity the closed-form predictions are
//    about, free of test-sample noise)
enum class EvalMetric { TestLoss, ParamError };

struct EvalReport {
  std::vector<double> device_loss;                // per device, byzantine included
  std::vector<std::optional<double>> device_acc;  // classification tasks only
  std::vector<bool> benign;
  // Aggregates over benign devices only. std is the population form
  // (divide by count): the fairness number of record.
  double benign_mean_loss = 0.0;
  double benign_std_loss = 0.0;
  std::optional<double> benign_mean_acc;
  std::optional<double> benign_std_acc;
};

enum class FairnessOrder { FirstFairer, Tie, SecondFairer };

namespace metrics {

// One model per device. Requires nonempty test splits for TestLoss and
// ground truth for ParamError.
EvalReport evaluate(std::span<const Vector> models, const Population& pop,
                    EvalMetric metric);

// Every device evaluated at the same (global) model.
EvalReport evaluate_global(const Vector& model, const Population& pop,
                           EvalMetric metric);

// Lower benign std = fairer. Mean performance is deliberately not consulted.
FairnessOrder compare_fairness(const EvalReport& a, const EvalReport& b);

// Binary decision rules: logistic predicts +1 iff sigmoid(x.w) >= 1/2,
// hinge predicts sign(x.w); accuracy is the fraction matching the +-1 label.
double binary_accuracy(const LossKind& kind, const Vector& params,
                       const LocalDataset& data);

}  // namespace metrics
}  // namespace fedsim
