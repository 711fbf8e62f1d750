#include "fedsim/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fedsim {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

template <typename T>
T get_required(const json& obj, const std::string& where, const std::string& key) {
  if (!obj.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

SplitFractions parse_split(const json& node, const std::string& where) {
  if (!node.is_array() || node.size() != 3) {
    throw ConfigError(where + ": split must be [train, val, test]");
  }
  SplitFractions s;
  s.train = node[0].get<double>();
  s.val = node[1].get<double>();
  s.test = node[2].get<double>();
  return s;
}

ThetaPolicy parse_theta(const json& node) {
  check_keys(node, "data.theta", {"policy", "value"});
  ThetaPolicy t;
  std::string policy = get_or<std::string>(node, "policy", "fixed");
  if (policy == "fixed") {
    t.kind = ThetaPolicy::Kind::Fixed;
  } else if (policy == "uniform") {
    t.kind = ThetaPolicy::Kind::Uniform;
  } else {
    throw ConfigError("data.theta.policy must be 'fixed' or 'uniform'");
  }
  t.value = get_or<double>(node, "value", 0.0);
  return t;
}

void parse_synthetic_common(const json& node, const std::string& where, int& K, int& K_a,
                            int& n, double& sigma, double& tau, double& tau_a) {
  K = get_required<int>(node, where, "K");
  n = get_required<int>(node, where, "n");
  K_a = get_or<int>(node, "K_a", 0);
  sigma = get_required<double>(node, where, "sigma");
  tau = get_required<double>(node, where, "tau");
  tau_a = get_or<double>(node, "tau_a", tau);
}

DataConfig parse_data(const json& node) {
  DataConfig data;
  std::string kind = get_required<std::string>(node, "data", "kind");
  if (kind == "point_estimation") {
    check_keys(node, "data",
               {"kind", "K", "K_a", "n", "sigma", "tau", "tau_a", "dim", "theta", "split"});
    data.kind = DataConfig::Kind::PointEstimation;
    auto& pe = data.pe;
    parse_synthetic_common(node, "data", pe.K, pe.K_a, pe.n, pe.sigma, pe.tau, pe.tau_a);
    pe.dim = get_or<int>(node, "dim", 1);
    if (node.contains("theta")) pe.theta = parse_theta(node.at("theta"));
    if (node.contains("split")) pe.split = parse_split(node.at("split"), "data");
  } else if (kind == "linear_regression") {
    check_keys(node, "data",
               {"kind", "K", "K_a", "n", "d", "beta", "sigma", "tau", "tau_a", "design",
                "theta", "split"});
    data.kind = DataConfig::Kind::LinReg;
    auto& lr = data.lr;
    parse_synthetic_common(node, "data", lr.K, lr.K_a, lr.n, lr.sigma, lr.tau, lr.tau_a);
    lr.d = get_required<int>(node, "data", "d");
    lr.beta = get_required<double>(node, "data", "beta");
    std::string design = get_or<std::string>(node, "design", "orthogonal_scaled");
    if (design == "orthogonal_scaled") {
      lr.design = LinRegSpec::Design::OrthogonalScaled;
    } else if (design == "gaussian") {
      lr.design = LinRegSpec::Design::Gaussian;
    } else {
      throw ConfigError("data.design must be 'orthogonal_scaled' or 'gaussian'");
    }
    if (node.contains("theta")) lr.theta = parse_theta(node.at("theta"));
    if (node.contains("split")) lr.split = parse_split(node.at("split"), "data");
  } else if (kind == "csv") {
    check_keys(node, "data",
               {"kind", "path", "label_column", "partition", "task", "reg", "split",
                "power_law_exponent"});
    data.kind = DataConfig::Kind::Csv;
    data.csv_path = get_required<std::string>(node, "data", "path");
    auto& schema = data.csv;
    schema.label_column = get_required<std::string>(node, "data", "label_column");

    const json& part = node.contains("partition") ? node.at("partition") : json::object();
    check_keys(part, "data.partition",
               {"mode", "column", "alpha", "devices", "classes_per_device"});
    std::string mode = get_or<std::string>(part, "mode", "by_column");
    if (mode == "by_column") {
      schema.partition.mode = PartitionSpec::Mode::ByColumn;
      schema.partition.column = get_required<std::string>(part, "data.partition", "column");
    } else if (mode == "dirichlet") {
      schema.partition.mode = PartitionSpec::Mode::Dirichlet;
      schema.partition.alpha = get_or<double>(part, "alpha", 1.0);
      schema.partition.devices = get_required<int>(part, "data.partition", "devices");
    } else if (mode == "classes_per_device") {
      schema.partition.mode = PartitionSpec::Mode::ClassesPerDevice;
      schema.partition.devices = get_required<int>(part, "data.partition", "devices");
      schema.partition.classes_per_device =
          get_or<int>(part, "classes_per_device", 1);
    } else {
      throw ConfigError("data.partition.mode must be by_column, dirichlet or classes_per_device");
    }

    std::string task = get_or<std::string>(node, "task", "logistic");
    double reg = get_or<double>(node, "reg", 1e-3);
    if (task == "logistic") {
      schema.task = LossKind{LossType::Logistic, reg};
    } else if (task == "hinge_svm") {
      schema.task = LossKind{LossType::HingeSvm, reg};
    } else if (task == "linear_regression") {
      schema.task = LossKind{LossType::LinReg, reg};
    } else {
      throw ConfigError("data.task must be logistic, hinge_svm or linear_regression");
    }
    if (node.contains("split")) schema.split = parse_split(node.at("split"), "data");
    if (node.contains("power_law_exponent")) {
      schema.power_law_exponent = node.at("power_law_exponent").get<double>();
    }
  } else {
    throw ConfigError("data.kind must be point_estimation, linear_regression or csv");
  }
  return data;
}

AttackSpec parse_attack(const json& node) {
  check_keys(node, "attack",
             {"variant", "sigma_attack", "boost", "lie_about_loss", "adversary_fraction"});
  AttackSpec attack;
  std::string variant = get_or<std::string>(node, "variant", "none");
  if (variant == "none") {
    attack.variant = AttackVariant::None;
  } else if (variant == "label_poison") {
    attack.variant = AttackVariant::LabelPoison;
  } else if (variant == "random_update") {
    attack.variant = AttackVariant::RandomUpdate;
  } else if (variant == "model_replacement") {
    attack.variant = AttackVariant::ModelReplacement;
  } else {
    throw ConfigError("attack.variant must be none, label_poison, random_update or model_replacement");
  }
  attack.sigma_attack = get_or<double>(node, "sigma_attack", 1.0);
  if (node.contains("boost")) {
    const json& b = node.at("boost");
    if (b.is_string() && b.get<std::string>() == "num_selected") {
      attack.boost.kind = BoostPolicy::Kind::NumSelected;
    } else if (b.is_number()) {
      attack.boost.kind = BoostPolicy::Kind::Fixed;
      attack.boost.value = b.get<double>();
    } else {
      throw ConfigError("attack.boost must be 'num_selected' or a number");
    }
  }
  attack.lie_about_loss = get_or<bool>(node, "lie_about_loss", false);
  attack.adversary_fraction = get_or<double>(node, "adversary_fraction", 0.0);
  if (attack.adversary_fraction < 0 || attack.adversary_fraction > 1) {
    throw ConfigError("attack.adversary_fraction must be in [0, 1]");
  }
  return attack;
}

AggregatorSpec parse_aggregator(const json& node) {
  check_keys(node, "aggregator", {"variant", "f", "k", "t", "weights"});
  AggregatorSpec agg;
  std::string variant = get_or<std::string>(node, "variant", "mean");
  if (variant == "mean") agg.variant = AggVariant::Mean;
  else if (variant == "coord_median") agg.variant = AggVariant::CoordMedian;
  else if (variant == "krum") agg.variant = AggVariant::Krum;
  else if (variant == "multi_krum") agg.variant = AggVariant::MultiKrum;
  else if (variant == "clipping") agg.variant = AggVariant::Clipping;
  else if (variant == "k_norm") agg.variant = AggVariant::KNorm;
  else if (variant == "k_loss") agg.variant = AggVariant::KLoss;
  else if (variant == "tilted") agg.variant = AggVariant::Tilted;
  else throw ConfigError("aggregator.variant unknown: " + variant);
  if (node.contains("f")) agg.f = node.at("f").get<int>();
  if (node.contains("k")) agg.k = node.at("k").get<int>();
  agg.tilt = get_or<double>(node, "t", 1.0);
  if (node.contains("weights")) {
    agg.mean_weights = node.at("weights").get<std::vector<double>>();
  }
  return agg;
}

SolverConfig parse_solver(const json& node) {
  check_keys(node, "solver",
             {"rounds", "sample_fraction", "global_local_iters", "personal_iters",
              "eta_global", "eta_personal", "batch_size", "stop_tol",
              "decaying_personal_eta", "mu"});
  SolverConfig s;
  s.rounds = get_or<int>(node, "rounds", 100);
  s.sample_fraction = get_or<double>(node, "sample_fraction", 1.0);
  s.global_local_iters = get_or<int>(node, "global_local_iters", 1);
  s.personal_iters = get_or<int>(node, "personal_iters", 1);
  s.eta_global = get_or<double>(node, "eta_global", 0.1);
  s.eta_personal = get_or<double>(node, "eta_personal", 0.0);
  s.batch_size = get_or<int>(node, "batch_size", 0);
  s.stop_tol = get_or<double>(node, "stop_tol", 0.0);
  s.decaying_personal_eta = get_or<bool>(node, "decaying_personal_eta", false);
  s.mu = get_or<double>(node, "mu", 1.0);
  return s;
}

LambdaPolicy parse_lambda(const json& node) {
  check_keys(node, "lambda", {"policy", "value", "strong_attack"});
  LambdaPolicy p;
  std::string policy = get_or<std::string>(node, "policy", "fixed");
  if (policy == "fixed") {
    p.kind = LambdaPolicy::Kind::Fixed;
    p.value = get_or<double>(node, "value", 1.0);
    if (p.value < 0) throw ConfigError("lambda.value must be nonnegative");
  } else if (policy == "dynamic") {
    p.kind = LambdaPolicy::Kind::Dynamic;
    p.strong_attack = get_or<bool>(node, "strong_attack", false);
  } else {
    throw ConfigError("lambda.policy must be 'fixed' or 'dynamic'");
  }
  return p;
}

Method parse_method(const std::string& name) {
  if (name == "global") return Method::Global;
  if (name == "local") return Method::Local;
  if (name == "ditto_joint") return Method::DittoJoint;
  if (name == "ditto_finetune") return Method::DittoFinetune;
  if (name == "tilted") return Method::Tilted;
  throw ConfigError("unknown method: " + name);
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Global: return "global";
    case Method::Local: return "local";
    case Method::DittoJoint: return "ditto_joint";
    case Method::DittoFinetune: return "ditto_finetune";
    case Method::Tilted: return "tilted";
  }
  return "?";
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "config",
             {"data", "attack", "aggregator", "solver", "lambda", "sweep_grid", "methods",
              "metric", "trials", "master_seed", "output", "finetune_epochs", "tilt_t",
              "record_timings", "sweep_include_clean"});

  ExperimentConfig cfg;
  if (!root.contains("data")) throw ConfigError("config: missing 'data'");
  cfg.data = parse_data(root.at("data"));
  if (root.contains("attack")) cfg.attack = parse_attack(root.at("attack"));
  if (root.contains("aggregator")) cfg.aggregator = parse_aggregator(root.at("aggregator"));
  if (root.contains("solver")) cfg.solver = parse_solver(root.at("solver"));
  if (root.contains("lambda")) cfg.lambda = parse_lambda(root.at("lambda"));
  if (root.contains("sweep_grid")) {
    cfg.sweep_grid = root.at("sweep_grid").get<std::vector<double>>();
    for (double v : cfg.sweep_grid) {
      if (v < 0) throw ConfigError("sweep_grid values must be nonnegative");
    }
  }
  if (root.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : root.at("methods")) {
      cfg.methods.push_back(parse_method(m.get<std::string>()));
    }
    if (cfg.methods.empty()) throw ConfigError("methods must not be empty");
  }
  if (root.contains("metric")) {
    std::string metric = root.at("metric").get<std::string>();
    if (metric == "test_loss") cfg.metric = EvalMetric::TestLoss;
    else if (metric == "param_error") cfg.metric = EvalMetric::ParamError;
    else throw ConfigError("metric must be 'test_loss' or 'param_error'");
  }
  cfg.trials = get_or<int>(root, "trials", 1);
  if (cfg.trials < 1) throw ConfigError("trials must be positive");
  cfg.master_seed = get_or<std::uint64_t>(root, "master_seed", 0);
  cfg.output = get_or<std::string>(root, "output", "results.csv");
  cfg.finetune_epochs = get_or<int>(root, "finetune_epochs", 50);
  if (cfg.finetune_epochs < 0) throw ConfigError("finetune_epochs must be nonnegative");
  cfg.tilt_t = get_or<double>(root, "tilt_t", 1.0);
  cfg.record_timings = get_or<bool>(root, "record_timings", false);
  cfg.sweep_include_clean = get_or<bool>(root, "sweep_include_clean", true);

  // Cross-field checks: adversary counts must be coherent, and the
  // parameter-error metric needs a synthetic population.
  int K = 0, K_a = 0;
  if (cfg.data.kind == DataConfig::Kind::PointEstimation) {
    K = cfg.data.pe.K;
    K_a = cfg.data.pe.K_a;
  } else if (cfg.data.kind == DataConfig::Kind::LinReg) {
    K = cfg.data.lr.K;
    K_a = cfg.data.lr.K_a;
  }
  if (cfg.data.kind == DataConfig::Kind::Csv) {
    if (cfg.metric == EvalMetric::ParamError) {
      throw ConfigError("param_error metric is undefined for csv data");
    }
    cfg.data.csv.adversary_fraction = cfg.attack.adversary_fraction;
  } else {
    if (cfg.attack.adversary_fraction > 0) {
      int implied = static_cast<int>(std::lround(cfg.attack.adversary_fraction * K));
      if (implied != K_a) {
        throw ConfigError("attack.adversary_fraction disagrees with data K_a");
      }
    } else if (K > 0) {
      cfg.attack.adversary_fraction = static_cast<double>(K_a) / K;
    }
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace fedsim
