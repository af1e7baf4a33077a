#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rei/engine.hpp"

namespace rei {

// Variance deflation of the draw chain: phi(gamma) = gamma^2/(1-(1-gamma)^2)
// = gamma/(2-gamma); the chain variance is phi(gamma) times the bootstrap one.
double phi(double gamma);

struct CoefficientSummary {
  double estimate = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double autocorr1 = 0.0;
};

struct InferenceReport {
  VectorXd estimate;  // theta_bar over retained draws
  std::vector<CoefficientSummary> coefficients;
  double phi_gamma = 0.0;
  double adjustment = 0.0; // sqrt(m/(n phi(gamma)))
  double alpha = 0.05;
  long B = 0;
  long n = 0;
  long effective_m = 0;
  double gamma = 0.0;
};

// Quantile by linear interpolation between order statistics (continuous in B).
double quantile(std::vector<double> values, double p);

// Estimates, standard errors SE = sqrt(m/(n phi) * (1/B) sum (h_b - hbar)^2),
// and quantile CIs anchored at h(theta_bar) from the centered adjusted draws
// theta~_b = theta_bar + sqrt(m/(n phi)) (theta_b - theta_bar). h defaults to
// each coordinate.
InferenceReport summarize(const DrawChain& chain, double alpha, long n);

using ScalarFunction = std::function<double(const VectorXd&)>;
CoefficientSummary summarize_function(const DrawChain& chain, const ScalarFunction& h,
                                      double alpha, long n);

// Per-coefficient lag-ell sample autocorrelation of the retained draws.
VectorXd autocorrelation(const DrawChain& chain, long lag = 1);

// ---------------------------------------------------------------------------
// Classical sandwich references.
// ---------------------------------------------------------------------------

struct SandwichEstimate {
  MatrixXd bread; // [H_n(theta_hat)]^{-1}
  MatrixXd meat;  // (1/n) sum grad grad' or clustered score sums
  MatrixXd V;     // bread * meat * bread
  bool clustered = false;
};

SandwichEstimate sandwich(const ModelSpec& model, const Dataset& data,
                          const VectorXd& theta_hat, bool cluster = false);

// sqrt(grad_h' V grad_h / n)
double delta_method_se(const VectorXd& grad_h, const SandwichEstimate& V, long n);

} // namespace rei
