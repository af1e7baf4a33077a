#pragma once

#include <memory>
#include <string>

#include "rei/types.hpp"

namespace rei {

// Built-in per-observation objectives. Row layout is (y, x_1, ..., x_k)
// unless stated otherwise; d_theta = k.

// q = 1/2 (y - x'theta)^2, so G = -X'(y - X theta)/m and H = X'X/m on any plan.
ModelSpec make_ols(int d_theta);

// Negative probit log-likelihood with asymptotic log-Phi tails beyond |s| = 8;
// finite loss and stable derivatives out to |x'theta| ~ 30 and beyond.
ModelSpec make_probit(int d_theta);

// Numerically safe log Phi and inverse Mills ratio phi/Phi (exposed for tests).
double log_norm_cdf(double s);
double inverse_mills(double s);

// q = (y - f(x;theta))^2 with optional Gauss-Newton hessian 2 grad_f grad_f'.
using NlsFunc = std::function<double(const RowRef& x, const VectorXd&)>;
using NlsGrad = std::function<void(const RowRef& x, const VectorXd&, VectorXd&)>;
ModelSpec make_nls(int d_theta, NlsFunc f, NlsGrad grad_f, bool gauss_newton_hessian = true);

// ---------------------------------------------------------------------------
// Quadratic objective 1/2 (theta - center)' H (theta - center); rows are
// ignored by the loss. Eigenvalues cached in descending order.
// ---------------------------------------------------------------------------
struct QuadraticModel {
  MatrixXd H;
  VectorXd center;
  VectorXd eigenvalues;  // descending
  MatrixXd eigenvectors; // columns match eigenvalues
  int positive_count = 0;

  ModelSpec spec() const;
  double objective(const VectorXd& theta) const {
    VectorXd d = theta - center;
    return 0.5 * d.dot(H * d);
  }
};

QuadraticModel make_quadratic(MatrixXd H, VectorXd center);
// Requires at least one positive and one negative eigenvalue.
QuadraticModel make_saddle(MatrixXd H, VectorXd center);

// Placeholder dataset for row-free objectives.
Dataset dummy_dataset(long n, long width = 1);

// ---------------------------------------------------------------------------
// Saddle behaviour demo: from theta0 = q1 + c*q2 run modified classical NR and
// the stylized resampled NR (gradient noise ~ N(0, noise_sd^2 I)) and report
// where each lands.
// ---------------------------------------------------------------------------
struct SaddleDemoConfig {
  double gamma = 0.1;
  int iterations = 50;
  int seeds = 100;
  double noise_sd = 10.0;
  std::uint64_t seed = 1234;
};

struct SaddleDemoRow {
  double c = 0.0;
  VectorXd nr_theta;       // modified classical NR after `iterations`
  double nr_objective = 0.0;
  VectorXd rnr_theta;      // first seed's resampled run
  double rnr_objective = 0.0;
  double rnr_escape_fraction = 0.0; // share of seeds with |theta'q2| > 10
};

std::vector<SaddleDemoRow> saddle_demo(const QuadraticModel& model,
                                       const std::vector<double>& c_grid,
                                       const SaddleDemoConfig& config);

// ---------------------------------------------------------------------------
// Quadratic penalty wrapper: Q(theta) + lambda/(2n) ||theta - anchor||^2.
// The per-row loss carries the penalty term so plan averaging reproduces it;
// the live schedule lets the engine decay lambda between iterations.
// ---------------------------------------------------------------------------
struct PenaltySchedule {
  double lambda = 0.0;
};

ModelSpec wrap_penalty(const ModelSpec& inner, std::shared_ptr<PenaltySchedule> schedule,
                       VectorXd anchor, long n);
inline ModelSpec wrap_penalty(const ModelSpec& inner, double lambda, VectorXd anchor, long n) {
  auto s = std::make_shared<PenaltySchedule>();
  s->lambda = lambda;
  return wrap_penalty(inner, std::move(s), std::move(anchor), n);
}

// ---------------------------------------------------------------------------
// Synthetic DGPs with recorded truth.
// ---------------------------------------------------------------------------
enum class DgpKind { LinearGaussian, ProbitDgp, NonlinearPanel };

struct DgpConfig {
  DgpKind kind = DgpKind::LinearGaussian;
  long n = 0;          // LinearGaussian / ProbitDgp
  int n_units = 0;     // NonlinearPanel
  int T = 0;           // NonlinearPanel
  VectorXd theta;      // truth; for NonlinearPanel theta[0] is the noise variance
  std::uint64_t seed = 0;
};

struct SimulatedData {
  Dataset data;
  VectorXd theta_true; // includes realized unit effects for the panel DGP
};

SimulatedData simulate_dgp(const DgpConfig& config);

// Model for the NonlinearPanel DGP: rows (y, unit, time), theta = (log v,
// a_1..a_U) with per-row loss 1/2 log v + (y - a_unit)^2 / (2v). The pooled
// log-variance estimate has the classic O(1/T) fixed-T bias the split-panel
// correction removes. With per-unit incidental means, resample at the unit
// level with multiplier weights, not m-out-of-n draws, so every unit stays
// informative.
ModelSpec make_panel_variance_model(int n_units);

// Starting value from a linear probability fit: slope/phi(0), intercept
// (b0 - 1/2)/phi(0).
VectorXd probit_start_from_lpm(const Dataset& data);

// Mroz labor-force participation loader: builds the 8-column design
// (nwifeinc, educ, exper, exper^2, age, kidslt6, kidsge6, const) with outcome
// inlf from a user-supplied CSV. The repository ships no data.
Dataset load_mroz(const std::string& csv_path);

} // namespace rei
