#include "fedsim/losses.hpp"

#include <cmath>
#include <numeric>
#include <vector>

namespace fedsim::models {

namespace {

void check_shapes(const LossKind& kind, const Vector& params, const LocalDataset& data) {
  if (data.n() == 0) throw DataError("loss: empty dataset");
  if (params.size() != data.dim()) {
    throw DimensionError("loss: params dimension does not match features");
  }
  bool needs_labels = kind.type != LossType::PointEstimation;
  if (needs_labels && data.labels.size() != data.n()) {
    throw DimensionError("loss: labels missing or mis-sized");
  }
}

void check_binary_labels(const LocalDataset& data, std::span<const int> rows) {
  for (int r : rows) {
    double y = data.labels[r];
    if (y != 1.0 && y != -1.0) {
      throw DataError("classification labels must be +-1");
    }
  }
}

std::vector<int> all_rows(const LocalDataset& data) {
  std::vector<int> rows(static_cast<std::size_t>(data.n()));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

}  // namespace

double loss_batch(const LossKind& kind, const Vector& params,
                  const LocalDataset& data, std::span<const int> rows) {
  check_shapes(kind, params, data);
  if (rows.empty()) throw DataError("loss: empty row subset");
  const double n = static_cast<double>(rows.size());

  switch (kind.type) {
    case LossType::PointEstimation: {
      Vector mean = Vector::Zero(params.size());
      for (int r : rows) mean += data.features.row(r).transpose();
      mean /= n;
      return 0.5 * (params - mean).squaredNorm();
    }
    case LossType::LinReg: {
      double ss = 0.0;
      for (int r : rows) {
        double e = data.features.row(r).dot(params) - data.labels[r];
        ss += e * e;
      }
      return ss / (2.0 * n) + 0.5 * kind.reg * params.squaredNorm();
    }
    case LossType::HingeSvm: {
      check_binary_labels(data, rows);
      double total = 0.0;
      for (int r : rows) {
        double margin = data.labels[r] * data.features.row(r).dot(params);
        total += std::max(0.0, 1.0 - margin);
      }
      return total / n + 0.5 * kind.reg * params.squaredNorm();
    }
    case LossType::Logistic: {
      check_binary_labels(data, rows);
      double total = 0.0;
      for (int r : rows) {
        total += softplus(-data.labels[r] * data.features.row(r).dot(params));
      }
      return total / n + 0.5 * kind.reg * params.squaredNorm();
    }
  }
  throw ConfigError("loss: unknown loss type");
}

Vector grad_batch(const LossKind& kind, const Vector& params,
                  const LocalDataset& data, std::span<const int> rows) {
  check_shapes(kind, params, data);
  if (rows.empty()) throw DataError("grad: empty row subset");
  const double n = static_cast<double>(rows.size());

  switch (kind.type) {
    case LossType::PointEstimation: {
      Vector mean = Vector::Zero(params.size());
      for (int r : rows) mean += data.features.row(r).transpose();
      mean /= n;
      return params - mean;
    }
    case LossType::LinReg: {
      Vector g = Vector::Zero(params.size());
      for (int r : rows) {
        double e = data.features.row(r).dot(params) - data.labels[r];
        g += e * data.features.row(r).transpose();
      }
      return g / n + kind.reg * params;
    }
    case LossType::HingeSvm: {
      check_binary_labels(data, rows);
      Vector g = Vector::Zero(params.size());
      for (int r : rows) {
        double y = data.labels[r];
        double margin = y * data.features.row(r).dot(params);
        // Subgradient choice: a margin of exactly 1 contributes nothing.
        if (margin < 1.0) g -= y * data.features.row(r).transpose();
      }
      return g / n + kind.reg * params;
    }
    case LossType::Logistic: {
      check_binary_labels(data, rows);
      Vector g = Vector::Zero(params.size());
      for (int r : rows) {
        double y = data.labels[r];
        double z = -y * data.features.row(r).dot(params);
        double sig = 1.0 / (1.0 + std::exp(-z));  // sigmoid(z), z bounded above by |x.w|
        g -= y * sig * data.features.row(r).transpose();
      }
      return g / n + kind.reg * params;
    }
  }
  throw ConfigError("grad: unknown loss type");
}

double loss(const LossKind& kind, const Vector& params, const LocalDataset& data) {
  return loss_batch(kind, params, data, all_rows(data));
}

Vector grad(const LossKind& kind, const Vector& params, const LocalDataset& data) {
  return grad_batch(kind, params, data, all_rows(data));
}

Vector local_minimizer(const LossKind& kind, const LocalDataset& data) {
  if (data.n() == 0) throw DataError("local_minimizer: empty dataset");
  switch (kind.type) {
    case LossType::PointEstimation:
      return data.features.colwise().mean().transpose();
    case LossType::LinReg: {
      if (data.labels.size() != data.n()) {
        throw DimensionError("local_minimizer: labels missing or mis-sized");
      }
      const double n = static_cast<double>(data.n());
      Matrix gram = data.features.transpose() * data.features / n +
                    kind.reg * Matrix::Identity(data.dim(), data.dim());
      Eigen::ColPivHouseholderQR<Matrix> qr(gram);
      if (qr.rank() < data.dim()) {
        throw DataError("local_minimizer: singular design matrix");
      }
      return qr.solve(data.features.transpose() * data.labels / n);
    }
    default:
      throw ConfigError("local_minimizer: no closed form for this loss");
  }
}

}  // namespace fedsim::models
