#include "fedsim/theory.hpp"

#include <cmath>

namespace fedsim::theory {

namespace {

void check_inputs(const TheoryInputs& in) {
  if (in.K < 2) throw ConfigError("theory: K must be at least 2");
  if (in.K_a < 0 || in.K_a >= in.K) throw ConfigError("theory: need 0 <= K_a < K");
  if (in.n < 1) throw ConfigError("theory: n must be positive");
  if (in.sigma < 0 || in.tau < 0) throw ConfigError("theory: sigma, tau must be nonnegative");
  if (in.K_a > 0 && in.tau_a < in.tau) throw ConfigError("theory: tau_a must be >= tau");
  if (in.d < 1) throw ConfigError("theory: d must be positive");
}

// K tau^2 + (K_a/(K-1)) (tau_a^2 - tau^2): the adversary-corrected spread
// in the denominator of lambda*.
double corrected_spread(const TheoryInputs& in) {
  double corr = in.K_a > 0
                    ? (static_cast<double>(in.K_a) / (in.K - 1)) *
                          (in.tau_a * in.tau_a - in.tau * in.tau)
                    : 0.0;
  return in.K * in.tau * in.tau + corr;
}

}  // namespace

LambdaStar lambda_star_clean(const TheoryInputs& in) {
  check_inputs(in);
  if (in.tau == 0) return {true, 0.0};  // identical devices: pure global is optimal
  return {false, in.sigma * in.sigma / (in.n * in.tau * in.tau)};
}

LambdaStar lambda_star_adversarial(const TheoryInputs& in) {
  check_inputs(in);
  double denom = corrected_spread(in);
  if (denom == 0) return {true, 0.0};
  return {false, (in.sigma * in.sigma / in.n) * in.K / denom};
}

double posterior_variance(const TheoryInputs& in) {
  check_inputs(in);
  double obs = in.obs_var();
  if (obs == 0) return 0.0;
  double D = corrected_spread(in) + obs;
  double inv = 1.0 / obs + (in.K - 1) / D;
  return 1.0 / inv;
}

PosteriorPE bayes_posterior_pe(const TheoryInputs& in, double w_hat_k,
                               double w_hat_rest_mean) {
  check_inputs(in);
  double obs = in.obs_var();
  if (obs == 0) throw ConfigError("theory: posterior undefined with zero observation noise");
  double D = corrected_spread(in) + obs;
  double var = posterior_variance(in);
  PosteriorPE out;
  out.variance = var;
  out.weight_self = var / obs;
  out.weight_rest = (in.K - 1) * var / D;
  out.mean = out.weight_self * w_hat_k + out.weight_rest * w_hat_rest_mean;
  return out;
}

std::pair<double, double> predicted_error_and_variance(const TheoryInputs& in) {
  double v = posterior_variance(in);
  return {in.d * v, 2.0 * in.d * v * v};
}

double personalized_minimizer_pe(double lambda, double w_star, double w_hat_k) {
  if (lambda < 0) throw ConfigError("lambda must be nonnegative");
  return (lambda * w_star + w_hat_k) / (1.0 + lambda);
}

Vector personalized_minimizer_lr(double lambda, const Matrix& X, const Vector& y,
                                 const Vector& w_star) {
  if (lambda < 0) throw ConfigError("lambda must be nonnegative");
  if (X.rows() != y.size()) throw DimensionError("personalized_minimizer_lr: X/y mismatch");
  if (X.cols() != w_star.size()) throw DimensionError("personalized_minimizer_lr: X/w mismatch");
  const double n = static_cast<double>(X.rows());
  Matrix A = X.transpose() * X / n + lambda * Matrix::Identity(X.cols(), X.cols());
  Vector b = X.transpose() * y / n + lambda * w_star;
  Eigen::ColPivHouseholderQR<Matrix> qr(A);
  if (qr.rank() < X.cols()) {
    throw DataError("personalized_minimizer_lr: singular system (lambda = 0 with rank-deficient design)");
  }
  return qr.solve(b);
}

Vector global_erm_lr(std::span<const Matrix> X, std::span<const Vector> y) {
  if (X.empty() || X.size() != y.size()) {
    throw DimensionError("global_erm_lr: need matching nonempty X, y lists");
  }
  Eigen::Index d = X[0].cols();
  Matrix A = Matrix::Zero(d, d);
  Vector b = Vector::Zero(d);
  for (std::size_t k = 0; k < X.size(); ++k) {
    if (X[k].cols() != d || X[k].rows() != y[k].size()) {
      throw DimensionError("global_erm_lr: inconsistent device shapes");
    }
    const double n = static_cast<double>(X[k].rows());
    A += X[k].transpose() * X[k] / n;
    b += X[k].transpose() * y[k] / n;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(A);
  if (qr.rank() < d) throw DataError("global_erm_lr: singular pooled design");
  return qr.solve(b);
}

namespace {

void note_gap(MmseReport& report, bool at_star, double gap) {
  if (at_star) {
    report.max_gap_at_star = std::max(report.max_gap_at_star, gap);
  } else {
    report.max_gap_off_star = std::max(report.max_gap_off_star, gap);
  }
}

MmseReport start_report(const TheoryInputs& in, int trials) {
  check_inputs(in);
  LambdaStar star = lambda_star_adversarial(in);
  if (star.use_global) throw ConfigError("mmse check needs a finite lambda*");
  MmseReport report;
  report.lambda_star = star.value;
  report.trials = trials;
  return report;
}

}  // namespace

MmseReport mmse_equivalence_check(const TheoryInputs& in, int trials, RngStream& rng) {
  MmseReport report = start_report(in, trials);
  const double off_lambda = report.lambda_star * 3.0;
  const double obs_sd = std::sqrt(in.obs_var());
  const int benign = in.K - in.K_a;
  std::vector<double> w_hat(in.K);
  for (int t = 0; t < trials; ++t) {
    // Benign devices first, adversaries last; only the marginal laws matter.
    double sum = 0;
    for (int k = 0; k < in.K; ++k) {
      double spread = k < benign ? in.tau : in.tau_a;
      w_hat[k] = rng.normal(0, spread) + rng.normal(0, obs_sd);
      sum += w_hat[k];
    }
    double w_star = sum / in.K;
    for (int k = 0; k < benign; ++k) {
      double rest = (sum - w_hat[k]) / (in.K - 1);
      for (double lam : {report.lambda_star, off_lambda}) {
        double interpolated = personalized_minimizer_pe(lam, w_star, w_hat[k]);
        double posterior = bayes_posterior_pe(in, w_hat[k], rest).mean;
        note_gap(report, lam == report.lambda_star, std::abs(interpolated - posterior));
      }
    }
  }
  return report;
}

MmseReport mmse_equivalence_check_lr(const TheoryInputs& in, int trials, RngStream& rng) {
  if (in.beta <= 0) throw ConfigError("mmse lr check needs an explicit beta");
  if (in.n < in.d) throw ConfigError("mmse lr check needs n >= d");
  MmseReport report = start_report(in, trials);
  const double off_lambda = report.lambda_star * 3.0;
  const int benign = in.K - in.K_a;

  std::vector<Matrix> X(in.K);
  std::vector<Vector> y(in.K);
  std::vector<Vector> w_hat(in.K);
  for (int t = 0; t < trials; ++t) {
    for (int k = 0; k < in.K; ++k) {
      // Fresh orthogonal scaled design, X^T X = beta I.
      Matrix G(in.n, in.d);
      for (int r = 0; r < in.n; ++r) {
        for (int c = 0; c < in.d; ++c) G(r, c) = rng.normal(0, 1);
      }
      Eigen::HouseholderQR<Matrix> qr(G);
      X[k] = std::sqrt(in.beta) * (qr.householderQ() * Matrix::Identity(in.n, in.d));
      double spread = k < benign ? in.tau : in.tau_a;
      Vector w_true(in.d);
      for (int c = 0; c < in.d; ++c) w_true[c] = rng.normal(0, spread);
      y[k] = X[k] * w_true;
      for (int r = 0; r < in.n; ++r) y[k][r] += rng.normal(0, in.sigma);
      // OLS under the beta-orthogonal design.
      w_hat[k] = X[k].transpose() * y[k] / in.beta;
    }
    Vector w_star = global_erm_lr(X, y);
    for (int k = 0; k < benign; ++k) {
      Vector rest = Vector::Zero(in.d);
      for (int j = 0; j < in.K; ++j) {
        if (j != k) rest += w_hat[j];
      }
      rest /= (in.K - 1);
      for (double lam : {report.lambda_star, off_lambda}) {
        Vector interpolated = personalized_minimizer_lr(lam, X[k], y[k], w_star);
        PosteriorPE post = bayes_posterior_pe(in, 0.0, 0.0);  // weights only
        Vector posterior = post.weight_self * w_hat[k] + post.weight_rest * rest;
        note_gap(report, lam == report.lambda_star,
                 (interpolated - posterior).cwiseAbs().maxCoeff());
      }
    }
  }
  return report;
}

}  // namespace fedsim::theory
