#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedsim/core.hpp"
#include "fedsim/losses.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Per-device split of local data. Counts are rounded so that
// |train| + |val| + |test| == n exactly (train and val round to nearest,
// test takes the remainder).
struct SplitFractions {
  double train = 0.72;
  double val = 0.08;
  double test = 0.20;
};

struct ThetaPolicy {
  enum class Kind { Fixed, Uniform } kind = Kind::Fixed;
  double value = 0.0;  // Fixed: the center itself; Uniform: draw from [-value, value]
};

// Synthetic point estimation population: device k's true parameter is
// w_k = theta + N(0, tau^2) (benign) or theta + N(0, tau_a^2) (byzantine),
// and its samples are x_i = w_k + N(0, sigma^2), stored as feature rows.
struct PointEstimationSpec {
  int K = 1;        // devices
  int K_a = 0;      // byzantine devices (exact count)
  int n = 1;        // samples per device
  double sigma = 1.0;
  double tau = 1.0;
  double tau_a = 0.0;  // must be >= tau when K_a > 0
  int dim = 1;         // coordinates are independent; 1 is the standard setting
  ThetaPolicy theta;
  SplitFractions split{1.0, 0.0, 0.0};
};

// Synthetic linear regression: y = X w_k + N(0, sigma^2 I). The
// orthogonal_scaled design makes X^T X = beta I exactly (needs n >= d);
// gaussian draws i.i.d. N(0,1) entries.
struct LinRegSpec {
  int K = 1;
  int K_a = 0;
  int n = 1;
  int d = 1;
  double beta = 1.0;
  double sigma = 1.0;
  double tau = 1.0;
  double tau_a = 0.0;
  enum class Design { OrthogonalScaled, Gaussian } design = Design::OrthogonalScaled;
  ThetaPolicy theta;
  SplitFractions split{1.0, 0.0, 0.0};
};

// How CSV rows are assigned to devices.
struct PartitionSpec {
  enum class Mode { ByColumn, Dirichlet, ClassesPerDevice } mode = Mode::ByColumn;
  std::string column;     // ByColumn: group by this column's value
  double alpha = 1.0;     // Dirichlet concentration
  int devices = 0;        // Dirichlet / ClassesPerDevice: number of devices
  int classes_per_device = 1;
};

struct CsvSchema {
  std::string label_column;
  PartitionSpec partition;
  LossKind task{LossType::Logistic, 0.0};
  SplitFractions split{0.72, 0.08, 0.20};
  double adversary_fraction = 0.0;  // K_a = round(fraction * K)
  // Optional size skew: device k keeps ceil(n_k * (k+1)^-exponent) of its rows.
  std::optional<double> power_law_exponent;
};

struct Population {
  std::vector<Device> devices;
  // True per-device parameters for synthetic tasks; empty for CSV data.
  // Retained for metric computation only, never visible to solvers.
  std::vector<Vector> ground_truth;
  Vector theta;
  int dim = 0;
  int byzantine_count = 0;
  LossKind task;
  std::vector<double> label_alphabet;  // distinct labels, sorted (labeled tasks)

  int size() const { return static_cast<int>(devices.size()); }
  double adversary_fraction() const {
    return devices.empty() ? 0.0 : static_cast<double>(byzantine_count) / devices.size();
  }
};

namespace datagen {

Population gen_point_estimation(const PointEstimationSpec& spec, const RngStream& rng);
Population gen_linear_regression(const LinRegSpec& spec, const RngStream& rng);
Population load_csv_population(const std::string& path, const CsvSchema& schema,
                               const RngStream& rng);

}  // namespace datagen
}  // namespace fedsim
