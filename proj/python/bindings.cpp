#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "fedsim/aggregate.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/theory.hpp"

namespace py = pybind11;
using namespace fedsim;

namespace {

TheoryInputs make_inputs(int K, int K_a, int n, double sigma, double tau, double tau_a,
                         int d, double beta) {
  TheoryInputs in;
  in.K = K;
  in.K_a = K_a;
  in.n = n;
  in.sigma = sigma;
  in.tau = tau;
  in.tau_a = tau_a < 0 ? tau : tau_a;
  in.d = d;
  in.beta = beta;
  return in;
}

std::optional<double> star_value(const LambdaStar& s) {
  if (s.use_global) return std::nullopt;
  return s.value;
}

AggregatorSpec make_agg_spec(const std::string& name, std::optional<int> f,
                             std::optional<int> k, double t) {
  AggregatorSpec spec;
  if (name == "mean") spec.variant = AggVariant::Mean;
  else if (name == "coord_median") spec.variant = AggVariant::CoordMedian;
  else if (name == "krum") spec.variant = AggVariant::Krum;
  else if (name == "multi_krum") spec.variant = AggVariant::MultiKrum;
  else if (name == "clipping") spec.variant = AggVariant::Clipping;
  else if (name == "k_norm") spec.variant = AggVariant::KNorm;
  else if (name == "k_loss") spec.variant = AggVariant::KLoss;
  else if (name == "tilted") spec.variant = AggVariant::Tilted;
  else throw ConfigError("unknown aggregator: " + name);
  spec.f = f;
  spec.k = k;
  spec.tilt = t;
  return spec;
}

std::vector<RoundUpdate> make_updates(const Matrix& deltas, std::optional<std::vector<double>> losses) {
  std::vector<RoundUpdate> updates;
  updates.reserve(static_cast<std::size_t>(deltas.rows()));
  if (losses && static_cast<Eigen::Index>(losses->size()) != deltas.rows()) {
    throw DimensionError("losses length must match the number of update rows");
  }
  for (Eigen::Index i = 0; i < deltas.rows(); ++i) {
    RoundUpdate u;
    u.device = static_cast<int>(i);
    u.delta = deltas.row(i).transpose();
    u.train_loss = losses ? (*losses)[static_cast<std::size_t>(i)] : 0.0;
    u.norm = u.delta.norm();
    updates.push_back(std::move(u));
  }
  return updates;
}

}  // namespace

PYBIND11_MODULE(_fedsim, m) {
  m.doc() = "federated training simulator: experiment driver, aggregation rules, "
            "closed-form reference values";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  m.def(
      "run",
      [](const std::string& config_json) {
        auto cfg = parse_config(config_json);
        auto rows = experiment::run_experiment(cfg);
        return experiment::rows_to_csv(rows);
      },
      py::arg("config_json"),
      "Run the experiment described by a JSON config string; returns the result CSV.");

  m.def(
      "run_file",
      [](const std::string& path) {
        auto cfg = load_config_file(path);
        auto rows = experiment::run_experiment(cfg);
        experiment::write_file(cfg.output, experiment::rows_to_csv(rows));
        return cfg.output;
      },
      py::arg("path"), "Run a config file and write its output CSV; returns the output path.");

  m.def(
      "sweep",
      [](const std::string& config_json, const std::vector<double>& grid) {
        auto cfg = parse_config(config_json);
        auto rows = experiment::sweep_lambda(cfg, grid);
        auto summary = experiment::summarize(rows);
        return py::make_tuple(experiment::rows_to_csv(rows),
                              experiment::summary_to_csv(summary));
      },
      py::arg("config_json"), py::arg("grid"),
      "Sweep lambda over a grid; returns (rows_csv, summary_csv).");

  m.def(
      "aggregate",
      [](const std::string& name, const Matrix& deltas,
         std::optional<std::vector<double>> losses, std::optional<int> f,
         std::optional<int> k, double t, double adversary_fraction) {
        auto spec = make_agg_spec(name, f, k, t);
        auto updates = make_updates(deltas, std::move(losses));
        return aggregate::aggregate(spec, updates, adversary_fraction);
      },
      py::arg("name"), py::arg("deltas"), py::arg("losses") = std::nullopt,
      py::arg("f") = std::nullopt, py::arg("k") = std::nullopt, py::arg("t") = 1.0,
      py::arg("adversary_fraction") = 0.0,
      "Apply one aggregation rule to a (devices x dim) matrix of updates.");

  m.def(
      "lambda_star_clean",
      [](int K, int n, double sigma, double tau, int d, double beta) {
        return star_value(theory::lambda_star_clean(make_inputs(K, 0, n, sigma, tau, tau, d, beta)));
      },
      py::arg("K"), py::arg("n"), py::arg("sigma"), py::arg("tau"), py::arg("d") = 1,
      py::arg("beta") = 0.0,
      "Optimal interpolation strength without adversaries; None means 'use the global model'.");

  m.def(
      "lambda_star_adversarial",
      [](int K, int K_a, int n, double sigma, double tau, double tau_a, int d, double beta) {
        return star_value(
            theory::lambda_star_adversarial(make_inputs(K, K_a, n, sigma, tau, tau_a, d, beta)));
      },
      py::arg("K"), py::arg("K_a"), py::arg("n"), py::arg("sigma"), py::arg("tau"),
      py::arg("tau_a"), py::arg("d") = 1, py::arg("beta") = 0.0,
      "Adversary-corrected optimal interpolation strength.");

  m.def(
      "posterior_variance",
      [](int K, int K_a, int n, double sigma, double tau, double tau_a, int d, double beta) {
        return theory::posterior_variance(make_inputs(K, K_a, n, sigma, tau, tau_a, d, beta));
      },
      py::arg("K"), py::arg("K_a"), py::arg("n"), py::arg("sigma"), py::arg("tau"),
      py::arg("tau_a") = -1.0, py::arg("d") = 1, py::arg("beta") = 0.0);

  m.def(
      "predicted_error_and_variance",
      [](int K, int K_a, int n, double sigma, double tau, double tau_a, int d, double beta) {
        return theory::predicted_error_and_variance(
            make_inputs(K, K_a, n, sigma, tau, tau_a, d, beta));
      },
      py::arg("K"), py::arg("K_a"), py::arg("n"), py::arg("sigma"), py::arg("tau"),
      py::arg("tau_a") = -1.0, py::arg("d") = 1, py::arg("beta") = 0.0,
      "(expected benign error, across-device variance) at the optimal lambda.");

  m.def("personalized_minimizer_pe", &theory::personalized_minimizer_pe, py::arg("lambda_"),
        py::arg("w_star"), py::arg("w_hat_k"));

  m.def("personalized_minimizer_lr", &theory::personalized_minimizer_lr, py::arg("lambda_"),
        py::arg("X"), py::arg("y"), py::arg("w_star"));

  m.def(
      "mmse_check",
      [](int K, int K_a, int n, double sigma, double tau, double tau_a, int trials,
         std::uint64_t seed, double beta, int d) {
        auto in = make_inputs(K, K_a, n, sigma, tau, tau_a, d, beta);
        RngStream rng(seed);
        auto rep = beta > 0 ? theory::mmse_equivalence_check_lr(in, trials, rng)
                            : theory::mmse_equivalence_check(in, trials, rng);
        py::dict out;
        out["lambda_star"] = rep.lambda_star;
        out["max_gap_at_star"] = rep.max_gap_at_star;
        out["max_gap_off_star"] = rep.max_gap_off_star;
        out["trials"] = rep.trials;
        return out;
      },
      py::arg("K"), py::arg("K_a"), py::arg("n"), py::arg("sigma"), py::arg("tau"),
      py::arg("tau_a"), py::arg("trials") = 1000, py::arg("seed") = 0, py::arg("beta") = 0.0,
      py::arg("d") = 1,
      "Check that the interpolated estimator at lambda_star matches the posterior mean.");
}
