#include "fedsim/metrics.hpp"

#include <cmath>
#include <functional>

#include "fedsim/losses.hpp"

namespace fedsim::metrics {

namespace {

bool classification_task(const LossKind& kind) {
  return kind.type == LossType::HingeSvm || kind.type == LossType::Logistic;
}

void finalize(EvalReport& rep) {
  double sum = 0, sum_acc = 0;
  int count = 0;
  for (std::size_t i = 0; i < rep.device_loss.size(); ++i) {
    if (!rep.benign[i]) continue;
    sum += rep.device_loss[i];
    if (rep.device_acc[i]) sum_acc += *rep.device_acc[i];
    ++count;
  }
  if (count == 0) throw ConfigError("evaluate: no benign devices");
  rep.benign_mean_loss = sum / count;
  double var = 0, var_acc = 0;
  bool have_acc = true;
  for (std::size_t i = 0; i < rep.device_loss.size(); ++i) {
    if (!rep.benign[i]) continue;
    double dl = rep.device_loss[i] - rep.benign_mean_loss;
    var += dl * dl;
    if (rep.device_acc[i]) {
      double da = *rep.device_acc[i] - sum_acc / count;
      var_acc += da * da;
    } else {
      have_acc = false;
    }
  }
  // Population variance: spread across the benign devices actually present.
  rep.benign_std_loss = std::sqrt(var / count);
  if (have_acc && count > 0 && !rep.device_acc.empty() && rep.device_acc[0].has_value()) {
    rep.benign_mean_acc = sum_acc / count;
    rep.benign_std_acc = std::sqrt(var_acc / count);
  }
}

EvalReport evaluate_impl(const Population& pop, EvalMetric metric,
                         const std::function<const Vector&(int)>& model_for) {
  if (pop.devices.empty()) throw ConfigError("evaluate: empty population");
  if (metric == EvalMetric::ParamError && pop.ground_truth.empty()) {
    throw ConfigError("evaluate: parameter-error metric needs synthetic ground truth");
  }
  EvalReport rep;
  bool cls = classification_task(pop.task);
  for (int k = 0; k < pop.size(); ++k) {
    const Device& dev = pop.devices[k];
    const Vector& model = model_for(k);
    require_finite(model, "model under evaluation");
    double value;
    if (metric == EvalMetric::ParamError) {
      value = (model - pop.ground_truth[k]).squaredNorm();
    } else {
      if (dev.test.n() == 0) {
        throw DataError("evaluate: device " + std::to_string(dev.id) + " has an empty test set");
      }
      value = models::loss(pop.task, model, dev.test);
    }
    rep.device_loss.push_back(value);
    if (cls && dev.test.n() > 0) {
      rep.device_acc.push_back(binary_accuracy(pop.task, model, dev.test));
    } else {
      rep.device_acc.push_back(std::nullopt);
    }
    rep.benign.push_back(!dev.byzantine);
  }
  finalize(rep);
  return rep;
}

}  // namespace

double binary_accuracy(const LossKind& kind, const Vector& params,
                       const LocalDataset& data) {
  if (!classification_task(kind)) throw ConfigError("accuracy: classification tasks only");
  if (data.n() == 0) throw DataError("accuracy: empty dataset");
  int correct = 0;
  for (Eigen::Index r = 0; r < data.n(); ++r) {
    double score = data.features.row(r).dot(params);
    // Logistic: predict +1 iff sigmoid(score) >= 1/2, i.e. score >= 0.
    // Hinge: sign rule. Zero scores count as +1 in both cases.
    double pred = score >= 0 ? 1.0 : -1.0;
    if (pred == data.labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.n());
}

EvalReport evaluate(std::span<const Vector> models_list, const Population& pop,
                    EvalMetric metric) {
  if (static_cast<int>(models_list.size()) != pop.size()) {
    throw DimensionError("evaluate: one model per device required");
  }
  return evaluate_impl(pop, metric,
                       [&](int k) -> const Vector& { return models_list[k]; });
}

EvalReport evaluate_global(const Vector& model, const Population& pop, EvalMetric metric) {
  return evaluate_impl(pop, metric, [&](int) -> const Vector& { return model; });
}

FairnessOrder compare_fairness(const EvalReport& a, const EvalReport& b) {
  if (a.benign_std_loss < b.benign_std_loss) return FairnessOrder::FirstFairer;
  if (a.benign_std_loss > b.benign_std_loss) return FairnessOrder::SecondFairer;
  return FairnessOrder::Tie;
}

}  // namespace fedsim::metrics
