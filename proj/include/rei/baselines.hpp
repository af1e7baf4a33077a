#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rei/engine.hpp"

namespace rei {

struct BootstrapDraws {
  MatrixXd draws; // B x d
  std::string method;
  std::vector<bool> converged;     // per draw (standard bootstrap)
  int nonconverged_count = 0;
  bool warning = false;            // > 10% nonconverged

  // mean over converged draws only
  VectorXd mean() const;
  // per-coefficient sd over converged draws
  VectorXd sd() const;
};

struct InnerOptimizerConfig {
  long max_iters = 200;
  double gradient_tol = 1e-8;
  bool modify = false;
  double ridge = 0.0;
};

// Full re-optimization per replication, started at theta_hat; replication b
// consumes the plan derived from (seed, b), so methods given the same
// seed/scheme share plans exactly.
BootstrapDraws standard_bootstrap(const ModelSpec& model, const Dataset& data,
                                  const VectorXd& theta_hat, const SchemeConfig& scheme,
                                  long B, std::uint64_t seed,
                                  const InnerOptimizerConfig& inner = {});

// k full-gamma NR steps on each resampled objective from theta_hat.
BootstrapDraws dmk_kstep(const ModelSpec& model, const Dataset& data,
                         const VectorXd& theta_hat, int k, const SchemeConfig& scheme,
                         long B, std::uint64_t seed);

// Wild score bootstrap: one NR step with de-meaned multiplier weights and the
// full-sample hessian computed once.
BootstrapDraws ks_score(const ModelSpec& model, const Dataset& data,
                        const VectorXd& theta_hat, const SchemeConfig& scheme, long B,
                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Preconditioned Metropolis-adjusted Langevin sampler.
// ---------------------------------------------------------------------------

// Negative log-posterior and its gradient (prior already folded in).
struct LogPosterior {
  std::function<double(const VectorXd&)> neg_log_density;
  std::function<VectorXd(const VectorXd&)> gradient;
};

struct MalaConfig {
  double gamma = 0.0;             // 0 -> heuristic -2 log(0.57)/d
  double target_accept = 0.57;
  MatrixXd preconditioner;        // empty -> identity; typically [H_n(theta_hat)]^{-1}
  bool tune = false;              // scale gamma during burn-in to hit target_accept
  long burn = 0;
  std::uint64_t seed = 0;
};

struct MalaResult {
  MatrixXd draws; // B x d, post burn-in
  double acceptance_rate = 0.0; // over retained draws
  double gamma_used = 0.0;      // final (possibly tuned) step size
};

MalaResult mala_sample(const LogPosterior& target, const VectorXd& theta0,
                       const MalaConfig& config, long B);

inline double mala_heuristic_gamma(int d_theta) {
  return -2.0 * std::log(0.57) / static_cast<double>(d_theta);
}

} // namespace rei
