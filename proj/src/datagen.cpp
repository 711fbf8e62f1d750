#include "fedsim/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fedsim::datagen {

namespace {

void check_split(const SplitFractions& s) {
  if (s.train < 0 || s.val < 0 || s.test < 0) {
    throw ConfigError("split fractions must be nonnegative");
  }
  if (std::abs(s.train + s.val + s.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

// Round train/val to nearest, give test the remainder; counts always add up
// to n exactly.
struct SplitCounts {
  int train, val, test;
};

SplitCounts split_counts(const SplitFractions& s, int n) {
  int tr = static_cast<int>(std::lround(s.train * n));
  int va = static_cast<int>(std::lround(s.val * n));
  tr = std::min(tr, n);
  va = std::min(va, n - tr);
  int te = n - tr - va;
  if (tr < 1) throw ConfigError("split leaves a device with no training data");
  return {tr, va, te};
}

LocalDataset take_rows(const Matrix& features, const Vector& labels,
                       const std::vector<int>& order, int begin, int count) {
  LocalDataset out;
  out.features.resize(count, features.cols());
  if (labels.size() > 0) out.labels.resize(count);
  for (int i = 0; i < count; ++i) {
    out.features.row(i) = features.row(order[begin + i]);
    if (labels.size() > 0) out.labels[i] = labels[order[begin + i]];
  }
  return out;
}

// Shuffled split of one device's rows into train/val/test.
void assign_splits(Device& dev, const Matrix& features, const Vector& labels,
                   const SplitFractions& split, RngStream rng) {
  int n = static_cast<int>(features.rows());
  SplitCounts c = split_counts(split, n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  dev.train = take_rows(features, labels, order, 0, c.train);
  dev.validation = take_rows(features, labels, order, c.train, c.val);
  dev.test = take_rows(features, labels, order, c.train + c.val, c.test);
}

// Exactly K_a byzantine flags, position shuffled by a dedicated stream.
std::vector<char> byzantine_flags(int K, int K_a, RngStream rng) {
  std::vector<char> flags(K, 0);
  for (int i = K - K_a; i < K; ++i) flags[i] = 1;
  rng.shuffle(flags);
  return flags;
}

Vector draw_theta(const ThetaPolicy& policy, int dim, RngStream rng) {
  Vector theta(dim);
  if (policy.kind == ThetaPolicy::Kind::Fixed) {
    theta.setConstant(policy.value);
  } else {
    for (int i = 0; i < dim; ++i) {
      theta[i] = (2.0 * rng.uniform() - 1.0) * policy.value;
    }
  }
  return theta;
}

void check_common(int K, int K_a, int n, double sigma, double tau, double tau_a) {
  if (K < 1) throw ConfigError("K must be positive");
  if (K_a < 0 || K_a >= K) throw ConfigError("need 0 <= K_a < K (at least one benign device)");
  if (n < 1) throw ConfigError("n must be positive");
  if (sigma < 0 || tau < 0) throw ConfigError("sigma and tau must be nonnegative");
  if (K_a > 0 && tau_a < tau) throw ConfigError("tau_a must be >= tau");
}

}  // namespace

Population gen_point_estimation(const PointEstimationSpec& spec, const RngStream& rng) {
  check_common(spec.K, spec.K_a, spec.n, spec.sigma, spec.tau, spec.tau_a);
  if (spec.dim < 1) throw ConfigError("dim must be positive");
  check_split(spec.split);

  Population pop;
  pop.dim = spec.dim;
  pop.task = LossKind{LossType::PointEstimation, 0.0};
  pop.byzantine_count = spec.K_a;
  pop.theta = draw_theta(spec.theta, spec.dim, rng.child("theta"));
  auto flags = byzantine_flags(spec.K, spec.K_a, rng.child("byzflags"));

  for (int k = 0; k < spec.K; ++k) {
    RngStream dev_rng = rng.child("device", 0, static_cast<std::uint64_t>(k));
    double spread = flags[k] ? spec.tau_a : spec.tau;
    Vector w_k(spec.dim);
    for (int i = 0; i < spec.dim; ++i) w_k[i] = pop.theta[i] + dev_rng.normal(0, spread);
    Matrix samples(spec.n, spec.dim);
    for (int r = 0; r < spec.n; ++r) {
      for (int i = 0; i < spec.dim; ++i) samples(r, i) = w_k[i] + dev_rng.normal(0, spec.sigma);
    }

    Device dev;
    dev.id = k;
    dev.byzantine = flags[k] != 0;
    dev.personalized = Vector::Zero(spec.dim);
    assign_splits(dev, samples, Vector(), spec.split,
                  rng.child("split", 0, static_cast<std::uint64_t>(k)));
    pop.devices.push_back(std::move(dev));
    pop.ground_truth.push_back(std::move(w_k));
  }
  return pop;
}

Population gen_linear_regression(const LinRegSpec& spec, const RngStream& rng) {
  check_common(spec.K, spec.K_a, spec.n, spec.sigma, spec.tau, spec.tau_a);
  if (spec.d < 1) throw ConfigError("d must be positive");
  if (spec.beta <= 0) throw ConfigError("beta must be positive");
  if (spec.design == LinRegSpec::Design::OrthogonalScaled && spec.n < spec.d) {
    throw ConfigError("orthogonal_scaled design needs n >= d");
  }
  check_split(spec.split);

  Population pop;
  pop.dim = spec.d;
  pop.task = LossKind{LossType::LinReg, 0.0};
  pop.byzantine_count = spec.K_a;
  pop.theta = draw_theta(spec.theta, spec.d, rng.child("theta"));
  auto flags = byzantine_flags(spec.K, spec.K_a, rng.child("byzflags"));

  for (int k = 0; k < spec.K; ++k) {
    RngStream dev_rng = rng.child("device", 0, static_cast<std::uint64_t>(k));
    double spread = flags[k] ? spec.tau_a : spec.tau;
    Vector w_k(spec.d);
    for (int i = 0; i < spec.d; ++i) w_k[i] = pop.theta[i] + dev_rng.normal(0, spread);

    Matrix X(spec.n, spec.d);
    for (int r = 0; r < spec.n; ++r) {
      for (int i = 0; i < spec.d; ++i) X(r, i) = dev_rng.normal(0, 1);
    }
    if (spec.design == LinRegSpec::Design::OrthogonalScaled) {
      // Orthonormalize the columns, then scale so X^T X = beta I exactly.
      Eigen::HouseholderQR<Matrix> qr(X);
      Matrix q = qr.householderQ() * Matrix::Identity(spec.n, spec.d);
      X = std::sqrt(spec.beta) * q;
    }
    Vector y(spec.n);
    for (int r = 0; r < spec.n; ++r) {
      y[r] = X.row(r).dot(w_k) + dev_rng.normal(0, spec.sigma);
    }

    Device dev;
    dev.id = k;
    dev.byzantine = flags[k] != 0;
    dev.personalized = Vector::Zero(spec.d);
    assign_splits(dev, X, y, spec.split, rng.child("split", 0, static_cast<std::uint64_t>(k)));
    pop.devices.push_back(std::move(dev));
    pop.ground_truth.push_back(std::move(w_k));
  }
  return pop;
}

namespace {

// Minimal RFC-4180 reader: quoted fields, doubled quotes, LF or CRLF endings.
std::vector<std::string> parse_csv_line(const std::string& line, int line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) {
    throw DataError("csv line " + std::to_string(line_no) + ": unterminated quote");
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, int line_no, const std::string& col) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError("csv line " + std::to_string(line_no) + ": field '" + col +
                    "' is not a number: '" + s + "'");
  }
}

struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;  // raw strings, one per line
  std::vector<int> line_numbers;
};

RawTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open csv file: " + path);
  RawTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = parse_csv_line(line, line_no);
    if (line_no == 1) {
      table.columns = fields;
      continue;
    }
    if (fields.size() != table.columns.size()) {
      throw DataError("csv line " + std::to_string(line_no) + ": expected " +
                      std::to_string(table.columns.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (table.columns.empty()) throw DataError("csv file has no header: " + path);
  return table;
}

int column_index(const RawTable& t, const std::string& name) {
  auto it = std::find(t.columns.begin(), t.columns.end(), name);
  if (it == t.columns.end()) throw DataError("csv column not found: " + name);
  return static_cast<int>(it - t.columns.begin());
}

}  // namespace

Population load_csv_population(const std::string& path, const CsvSchema& schema,
                               const RngStream& rng) {
  check_split(schema.split);
  if (schema.adversary_fraction < 0 || schema.adversary_fraction > 1) {
    throw ConfigError("adversary_fraction must be in [0, 1]");
  }
  RawTable table = read_csv_file(path);
  int label_idx = column_index(table, schema.label_column);
  int part_idx = -1;
  if (schema.partition.mode == PartitionSpec::Mode::ByColumn) {
    part_idx = column_index(table, schema.partition.column);
  }

  // Feature columns: everything except the label (and the grouping column).
  std::vector<int> feat_idx;
  for (int c = 0; c < static_cast<int>(table.columns.size()); ++c) {
    if (c != label_idx && c != part_idx) feat_idx.push_back(c);
  }
  if (feat_idx.empty()) throw DataError("csv has no feature columns");

  const int n_rows = static_cast<int>(table.rows.size());
  if (n_rows == 0) throw DataError("csv has no data rows");
  Matrix features(n_rows, static_cast<int>(feat_idx.size()));
  Vector labels(n_rows);
  for (int r = 0; r < n_rows; ++r) {
    for (std::size_t j = 0; j < feat_idx.size(); ++j) {
      features(r, static_cast<int>(j)) = parse_double(
          table.rows[r][feat_idx[j]], table.line_numbers[r], table.columns[feat_idx[j]]);
    }
    labels[r] = parse_double(table.rows[r][label_idx], table.line_numbers[r],
                             schema.label_column);
  }

  // Assign rows to devices.
  std::vector<std::vector<int>> device_rows;
  switch (schema.partition.mode) {
    case PartitionSpec::Mode::ByColumn: {
      std::map<std::string, std::vector<int>> groups;  // sorted keys = device order
      for (int r = 0; r < n_rows; ++r) groups[table.rows[r][part_idx]].push_back(r);
      for (auto& [key, rows] : groups) device_rows.push_back(std::move(rows));
      break;
    }
    case PartitionSpec::Mode::Dirichlet: {
      int K = schema.partition.devices;
      if (K < 1) throw ConfigError("dirichlet partition needs a positive device count");
      if (schema.partition.alpha <= 0) throw ConfigError("dirichlet alpha must be positive");
      device_rows.assign(K, {});
      std::map<double, std::vector<int>> by_class;
      for (int r = 0; r < n_rows; ++r) by_class[labels[r]].push_back(r);
      int class_index = 0;
      for (auto& [label, rows] : by_class) {
        RngStream crng = rng.child("partition", 0, static_cast<std::uint64_t>(class_index++));
        // Dirichlet weights over devices for this class.
        std::vector<double> w(K);
        double total = 0;
        std::gamma_distribution<double> gamma(schema.partition.alpha, 1.0);
        for (int k = 0; k < K; ++k) {
          w[k] = gamma(crng.engine());
          total += w[k];
        }
        for (int k = 0; k < K; ++k) w[k] /= total;
        for (int r : rows) {
          double u = crng.uniform();
          double acc = 0;
          int pick = K - 1;
          for (int k = 0; k < K; ++k) {
            acc += w[k];
            if (u < acc) {
              pick = k;
              break;
            }
          }
          device_rows[pick].push_back(r);
        }
      }
      break;
    }
    case PartitionSpec::Mode::ClassesPerDevice: {
      int K = schema.partition.devices;
      int m = schema.partition.classes_per_device;
      if (K < 1 || m < 1) throw ConfigError("classes_per_device partition needs positive K and m");
      std::map<double, std::vector<int>> by_class;
      for (int r = 0; r < n_rows; ++r) by_class[labels[r]].push_back(r);
      int C = static_cast<int>(by_class.size());
      if (K * m < C) {
        throw ConfigError("classes_per_device: K*m must cover every class");
      }
      std::vector<int> class_order(C);
      for (int i = 0; i < C; ++i) class_order[i] = i;
      RngStream prng = rng.child("partition");
      prng.shuffle(class_order);
      // Device k holds classes class_order[(k*m + j) mod C].
      std::vector<std::vector<int>> owners(C);
      for (int k = 0; k < K; ++k) {
        for (int j = 0; j < m; ++j) owners[class_order[(k * m + j) % C]].push_back(k);
      }
      device_rows.assign(K, {});
      int ci = 0;
      for (auto& [label, rows] : by_class) {
        auto& own = owners[ci++];
        for (std::size_t i = 0; i < rows.size(); ++i) {
          device_rows[own[i % own.size()]].push_back(rows[i]);
        }
      }
      break;
    }
  }

  int K = static_cast<int>(device_rows.size());
  if (n_rows < K) throw DataError("fewer rows than devices, cannot populate everyone");
  // Random partitions can leave a device empty on unlucky draws. Hand such a
  // device one row from the currently largest holder (deterministic, no rng)
  // instead of aborting a whole trial.
  for (int k = 0; k < K; ++k) {
    if (!device_rows[k].empty()) continue;
    int donor = -1;
    for (int j = 0; j < K; ++j) {
      if (device_rows[j].size() >= 2 &&
          (donor < 0 || device_rows[j].size() > device_rows[donor].size())) {
        donor = j;
      }
    }
    device_rows[k].push_back(device_rows[donor].back());
    device_rows[donor].pop_back();
  }

  // Optional power-law size skew: device k keeps ceil(n_k (k+1)^-gamma) rows.
  if (schema.power_law_exponent) {
    double g = *schema.power_law_exponent;
    for (int k = 0; k < K; ++k) {
      auto& rows = device_rows[k];
      int keep = std::max(
          1, static_cast<int>(std::ceil(rows.size() * std::pow(k + 1, -g))));
      if (keep < static_cast<int>(rows.size())) {
        RngStream srng = rng.child("sizing", 0, static_cast<std::uint64_t>(k));
        srng.shuffle(rows);
        rows.resize(keep);
        std::sort(rows.begin(), rows.end());
      }
    }
  }

  Population pop;
  pop.dim = static_cast<int>(feat_idx.size());
  pop.task = schema.task;
  pop.byzantine_count = static_cast<int>(std::lround(schema.adversary_fraction * K));
  if (pop.byzantine_count >= K && K > 0) pop.byzantine_count = K - 1;

  // Distinct labels before any +-1 normalization.
  std::set<double> distinct(labels.begin(), labels.end());
  bool classification =
      schema.task.type == LossType::HingeSvm || schema.task.type == LossType::Logistic;
  if (classification) {
    if (distinct.size() != 2) {
      throw ConfigError("binary classification needs exactly 2 label values, got " +
                        std::to_string(distinct.size()));
    }
    double lo = *distinct.begin();
    for (int r = 0; r < n_rows; ++r) labels[r] = labels[r] == lo ? -1.0 : 1.0;
    pop.label_alphabet = {-1.0, 1.0};
  } else {
    pop.label_alphabet.assign(distinct.begin(), distinct.end());
  }

  auto flags = byzantine_flags(K, pop.byzantine_count, rng.child("byzflags"));
  for (int k = 0; k < K; ++k) {
    const auto& rows = device_rows[k];
    Matrix df(rows.size(), pop.dim);
    Vector dl(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      df.row(static_cast<int>(i)) = features.row(rows[i]);
      dl[static_cast<int>(i)] = labels[rows[i]];
    }
    Device dev;
    dev.id = k;
    dev.byzantine = flags[k] != 0;
    dev.personalized = Vector::Zero(pop.dim);
    assign_splits(dev, df, dl, schema.split, rng.child("split", 0, static_cast<std::uint64_t>(k)));
    pop.devices.push_back(std::move(dev));
  }
  return pop;
}

}  // namespace fedsim::datagen
