#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rei/conditioning.hpp"
#include "rei/objective.hpp"
#include "rei/resampling.hpp"

namespace rei {

enum class Method { RGD, RNR, RQN };

struct PenaltyConfig {
  bool enabled = false;
  double lambda0 = 20.0;
  double decay = 0.9;
  long duration = -1;      // iterations at lambda0 before decay; -1 -> burn/2
  VectorXd anchor;         // empty -> theta0
};

struct RunConfig {
  double gamma = 0.1;      // in (0, 1]
  long B = 1000;           // retained draws
  long burn = -1;          // -1 -> max(50, ceil(log(0.01)/log(1-gamma)))
  SchemeConfig scheme;
  Method method = Method::RQN;
  VectorXd theta0;
  PenaltyConfig penalty;
  std::uint64_t seed = 0;
  QnParams qn;
  bool nr_modify = false;  // |eigenvalue| modification for the rNR conditioner
  bool record_plans = false;

  long resolved_burn() const {
    if (burn >= 0) return burn;
    if (gamma >= 1.0) return 50;
    return std::max<long>(50, static_cast<long>(
        std::ceil(std::log(0.01) / std::log(1.0 - gamma))));
  }
  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("run: gamma must be in (0,1]");
    if (B < 1) throw ConfigError("run: B must be >= 1");
    if (penalty.enabled && !(penalty.decay > 0.0 && penalty.decay <= 1.0))
      throw ConfigError("run: penalty decay must be in (0,1]");
    if (theta0.size() == 0) throw ConfigError("run: theta0 required");
  }
};

struct FailureEvent {
  long b = 0;
  std::string event;
  std::string detail;
};

struct DrawChain {
  MatrixXd draws;   // B x d, re-indexed after the burn-in
  MatrixXd burned;  // burn x d
  RunConfig config;
  long effective_m = 0;
  std::vector<FailureEvent> failure_log;
  std::vector<ResamplePlan> plans; // iteration order, when recorded

  long B() const { return draws.rows(); }
  long burn() const { return burned.rows(); }
  // Iterate k of the full (burned + retained) sequence, k in [0, burn+B).
  Eigen::RowVectorXd iterate(long k) const {
    return k < burned.rows() ? burned.row(k) : draws.row(k - burned.rows());
  }
};

// Burn-in and draw loop theta_{b+1} = theta_b - gamma P_b G_m^{(b+1)}(theta_b).
// rNR evaluates H on the same plan as G within an iteration; rQN feeds its
// Hessian-vector products the same plan as well.
DrawChain run_chain(const ModelSpec& model, const Dataset& data, const RunConfig& config);

// ---------------------------------------------------------------------------
// Deterministic full-sample optimizers.
// ---------------------------------------------------------------------------

enum class ClassicalMethod { GD, NR };

struct OptimizeOptions {
  bool modify = false;
  double ridge = 0.0;
  double gradient_tol = 0.0; // stop early when ||G||_inf <= tol (0 = run all iters)
};

enum class OptimizeStatus { Converged, MaxIterations, Diverged, Singular };

struct OptimizePath {
  MatrixXd path; // one row per visited iterate, theta0 first
  VectorXd final;
  OptimizeStatus status = OptimizeStatus::MaxIterations;
  long iterations = 0;
};

// Non-throwing core; the public wrapper throws DivergenceError on divergence.
OptimizePath classical_optimize_core(const ModelSpec& model, const Dataset& data,
                                     ClassicalMethod method, double gamma, long iters,
                                     const VectorXd& theta0, const OptimizeOptions& options);
OptimizePath classical_optimize(const ModelSpec& model, const Dataset& data,
                                ClassicalMethod method, double gamma, long iters,
                                const VectorXd& theta0, const OptimizeOptions& options = {});

// Full Newton to a stationary point (gamma = 1, tight tolerance).
VectorXd fit_mle(const ModelSpec& model, const Dataset& data, const VectorXd& theta0,
                 long max_iters = 200, double tol = 1e-10,
                 const OptimizeOptions& options = {});

// ---------------------------------------------------------------------------
// Stochastic gradient descent with decaying schedule gamma_k = gamma0 k^-delta
// and Polyak-Ruppert averaging.
// ---------------------------------------------------------------------------

struct SgdResult {
  VectorXd final;
  VectorXd polyak; // running mean of iterates theta_1..theta_K
};

SgdResult run_sgd(const ModelSpec& model, const Dataset& data, double gamma0,
                  double delta, long m, long iters, const VectorXd& theta0,
                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Split-panel jackknife runner: full and two half-panel chains advance in
// lockstep sharing each iteration's resampled unit set; corrected draws are
// 2 theta_full - (theta_half1 + theta_half2)/2.
// ---------------------------------------------------------------------------

struct SplitPanelResult {
  DrawChain full, half1, half2, corrected;
  std::vector<std::vector<int>> unit_draws; // per-iteration shared unit sets
};

SplitPanelResult run_split_panel(const ModelSpec& model, const Dataset& data,
                                 const RunConfig& config);

// ---------------------------------------------------------------------------
// Linear coupling process theta*_{b+1} = theta_hat + Psi (theta*_b -
// theta_hat) - gamma Pbar G_plan(theta_hat), replayed over a recorded chain's
// plans.
// ---------------------------------------------------------------------------

struct CouplingOracle {
  MatrixXd Psi;
  MatrixXd Pbar;
  VectorXd theta_hat;
};

CouplingOracle build_coupling_oracle(const ModelSpec& model, const Dataset& data,
                                     const VectorXd& theta_hat, Method method,
                                     double gamma);

// Returns the theta* sequence aligned with chain.iterate(k).
MatrixXd coupling_oracle_simulate(const CouplingOracle& oracle, const DrawChain& chain,
                                  const ModelSpec& model, const Dataset& data);

} // namespace rei
