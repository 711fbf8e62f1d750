#pragma once

#include <string>
#include <vector>

#include "fedsim/aggregate.hpp"
#include "fedsim/attacks.hpp"
#include "fedsim/datagen.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/solver.hpp"

namespace fedsim {

struct DataConfig {
  enum class Kind { PointEstimation, LinReg, Csv } kind = Kind::PointEstimation;
  PointEstimationSpec pe;
  LinRegSpec lr;
  std::string csv_path;
  CsvSchema csv;
};

enum class Method { Global, Local, DittoJoint, DittoFinetune, Tilted };
std::string method_name(Method m);

// Whole-experiment description, parsed from a JSON config file. Unknown keys
// are rejected so typos fail loudly instead of silently running defaults.
struct ExperimentConfig {
  DataConfig data;
  AttackSpec attack;
  AggregatorSpec aggregator;
  SolverConfig solver;
  LambdaPolicy lambda;
  std::vector<double> sweep_grid;  // nonempty: run the ditto methods at each value
  std::vector<Method> methods{Method::DittoJoint};
  EvalMetric metric = EvalMetric::TestLoss;
  int trials = 1;
  std::uint64_t master_seed = 0;
  std::string output = "results.csv";
  int finetune_epochs = 50;
  double tilt_t = 1.0;  // temperature for the tilted baseline method
  // Wall-clock per row is only recorded on request; the column stays 0
  // otherwise so reruns of the same config are byte-identical.
  bool record_timings = false;
  // When the configured scenario has adversaries, sweeps also run the
  // adversary-free twin for side-by-side curves.
  bool sweep_include_clean = true;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);

}  // namespace fedsim
