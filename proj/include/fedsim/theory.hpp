#pragma once

#include <span>
#include <utility>

#include "fedsim/core.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Closed-form reference quantities for the two linear settings:
// point estimation (each device estimates its own mean) and linear regression
// with an orthogonal scaled design, X^T X = beta I. Devices draw their true
// parameter from N(theta, tau^2 I) (benign) or N(theta, tau_a^2 I)
// (adversarial), observations carry noise sigma^2.
struct TheoryInputs {
  int K = 2;        // devices
  int K_a = 0;      // adversarial devices
  int n = 1;        // samples per device
  double sigma = 1.0;
  double tau = 1.0;
  double tau_a = 0.0;
  int d = 1;        // parameter dimension
  double beta = 0.0;  // design scale; <= 0 means the point-estimation case (beta = n)

  double beta_eff() const { return beta > 0 ? beta : static_cast<double>(n); }
  // Variance of the local estimator around the true parameter, per coordinate.
  double obs_var() const { return sigma * sigma / beta_eff(); }
};

// tau = 0 (or no spread at all) makes every interpolation weight collapse
// onto the global model; that regime is reported with the use_global flag
// rather than an infinite value.
struct LambdaStar {
  bool use_global = false;
  double value = 0.0;
};

struct PosteriorPE {
  double mean = 0.0;
  double variance = 0.0;
  double weight_self = 0.0;  // coefficient on the device's own estimate
  double weight_rest = 0.0;  // coefficient on the mean of the other estimates
};

struct MmseReport {
  double lambda_star = 0.0;
  double max_gap_at_star = 0.0;   // |interpolated - posterior mean| over the tuples
  double max_gap_off_star = 0.0;  // same at a detuned lambda (negative control)
  int trials = 0;
};

namespace theory {

// Best interpolation strength with no adversaries: sigma^2 / (n tau^2).
LambdaStar lambda_star_clean(const TheoryInputs& in);

// Adversary-corrected optimum:
// (sigma^2/n) * K / (K tau^2 + (K_a/(K-1)) (tau_a^2 - tau^2)).
LambdaStar lambda_star_adversarial(const TheoryInputs& in);

// Posterior variance sigma_w^2 of a benign device's parameter given every
// device's local estimate (per coordinate).
double posterior_variance(const TheoryInputs& in);

// Posterior of w_k given the device's own estimate and the mean of the
// other K-1 estimates (1-d point estimation).
PosteriorPE bayes_posterior_pe(const TheoryInputs& in, double w_hat_k,
                               double w_hat_rest_mean);

// (expected benign test MSE, its across-device variance) at the optimal
// lambda: (d sigma_w^2, 2 d sigma_w^4).
std::pair<double, double> predicted_error_and_variance(const TheoryInputs& in);

// Minimizer of F_k(v) + lambda/2 (v - w_star)^2 for point estimation:
// (lambda w_star + w_hat_k) / (1 + lambda).
double personalized_minimizer_pe(double lambda, double w_star, double w_hat_k);

// Linear regression: solves ((1/n) X^T X + lambda I) v = (1/n) X^T y + lambda w_star.
Vector personalized_minimizer_lr(double lambda, const Matrix& X, const Vector& y,
                                 const Vector& w_star);

// Global least-squares fit pooling all devices' data (the lambda -> inf limit).
Vector global_erm_lr(std::span<const Matrix> X, std::span<const Vector> y);

// Numerically check that the lambda-interpolated estimator at lambda_star
// coincides with the posterior mean on randomly drawn observation tuples,
// and that a detuned lambda does not. Point-estimation form.
MmseReport mmse_equivalence_check(const TheoryInputs& in, int trials, RngStream& rng);

// Same identity for linear regression with X^T X = beta I, exercising the
// matrix solve path on synthetic designs.
MmseReport mmse_equivalence_check_lr(const TheoryInputs& in, int trials, RngStream& rng);

}  // namespace theory
}  // namespace fedsim
