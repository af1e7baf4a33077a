#include "rei/baselines.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace rei {

VectorXd BootstrapDraws::mean() const {
  VectorXd out = VectorXd::Zero(draws.cols());
  long count = 0;
  for (long b = 0; b < draws.rows(); ++b) {
    if (!converged.empty() && !converged[b]) continue;
    out += draws.row(b).transpose();
    ++count;
  }
  if (count == 0) throw NumericalEvalError("bootstrap: no converged draws", -1);
  return out / static_cast<double>(count);
}

VectorXd BootstrapDraws::sd() const {
  const VectorXd m = mean();
  VectorXd ss = VectorXd::Zero(draws.cols());
  long count = 0;
  for (long b = 0; b < draws.rows(); ++b) {
    if (!converged.empty() && !converged[b]) continue;
    ss += (draws.row(b).transpose() - m).cwiseAbs2();
    ++count;
  }
  return (ss / static_cast<double>(std::max<long>(1, count - 1))).cwiseSqrt();
}

namespace {

// NR iterations on a resampled objective; returns false on a singular hessian,
// divergence, or missing the gradient tolerance.
bool optimize_on_plan(const ModelSpec& model, const Dataset& data, const ResamplePlan& plan,
                      VectorXd& theta, const InnerOptimizerConfig& inner) {
  EvalRequest want;
  want.value = false;
  want.gradient = true;
  want.hessian = true;
  NrOptions nr;
  nr.modify = inner.modify;
  nr.ridge = inner.ridge;
  for (long k = 0; k < inner.max_iters; ++k) {
    ObjectiveEvaluation eval = evaluate(model, data, theta, plan, want);
    if (eval.gradient->cwiseAbs().maxCoeff() <= inner.gradient_tol) return true;
    try {
      theta -= nr_conditioner(*eval.hessian, nr).matrix * (*eval.gradient);
    } catch (const SingularityError&) {
      return false;
    }
    if (!theta.allFinite() || theta.cwiseAbs().maxCoeff() > 1e8) return false;
  }
  return plan_gradient(model, data, theta, plan).cwiseAbs().maxCoeff() <= inner.gradient_tol;
}

} // namespace

BootstrapDraws standard_bootstrap(const ModelSpec& model, const Dataset& data,
                                  const VectorXd& theta_hat, const SchemeConfig& scheme,
                                  long B, std::uint64_t seed,
                                  const InnerOptimizerConfig& inner) {
  BootstrapDraws out;
  out.method = "boot";
  out.draws.resize(B, theta_hat.size());
  out.converged.assign(B, true);
  for (long b = 0; b < B; ++b) {
    ResamplePlan plan = draw_plan_at(scheme, data, seed, static_cast<std::uint64_t>(b + 1));
    VectorXd theta = theta_hat;
    if (!optimize_on_plan(model, data, plan, theta, inner)) {
      out.converged[b] = false;
      ++out.nonconverged_count;
      theta = theta_hat;
    }
    out.draws.row(b) = theta.transpose();
  }
  out.warning = out.nonconverged_count * 10 > B;
  return out;
}

BootstrapDraws dmk_kstep(const ModelSpec& model, const Dataset& data,
                         const VectorXd& theta_hat, int k, const SchemeConfig& scheme,
                         long B, std::uint64_t seed) {
  if (k < 1) throw ConfigError("dmk_kstep: k must be >= 1");
  BootstrapDraws out;
  out.method = "dmk";
  out.draws.resize(B, theta_hat.size());
  out.converged.assign(B, true);
  EvalRequest want;
  want.value = false;
  want.gradient = true;
  want.hessian = true;
  for (long b = 0; b < B; ++b) {
    ResamplePlan plan = draw_plan_at(scheme, data, seed, static_cast<std::uint64_t>(b + 1));
    VectorXd theta = theta_hat;
    for (int step = 0; step < k; ++step) {
      ObjectiveEvaluation eval = evaluate(model, data, theta, plan, want);
      Eigen::LDLT<MatrixXd> ldlt(*eval.hessian);
      if (ldlt.info() != Eigen::Success) {
        out.converged[b] = false;
        ++out.nonconverged_count;
        break;
      }
      theta -= ldlt.solve(*eval.gradient); // full step, no damping
    }
    out.draws.row(b) = theta.transpose();
  }
  out.warning = out.nonconverged_count * 10 > B;
  return out;
}

BootstrapDraws ks_score(const ModelSpec& model, const Dataset& data,
                        const VectorXd& theta_hat, const SchemeConfig& scheme, long B,
                        std::uint64_t seed) {
  if (scheme.scheme == Scheme::MOutOfN)
    throw ConfigError("ks_score: requires a multiplier-weight scheme");
  if (!scheme.demean) throw ConfigError("ks_score: weights must be de-meaned");

  EvalRequest want;
  want.value = false;
  want.hessian = true;
  const MatrixXd H =
      *evaluate(model, data, theta_hat, unit_plan(data.n()), want).hessian;
  Eigen::LDLT<MatrixXd> ldlt(H);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw SingularityError("ks_score: singular full-sample hessian");

  BootstrapDraws out;
  out.method = "ks";
  out.draws.resize(B, theta_hat.size());
  for (long b = 0; b < B; ++b) {
    ResamplePlan plan = draw_plan_at(scheme, data, seed, static_cast<std::uint64_t>(b + 1));
    // de-meaned weights make this the reweighted score at theta_hat
    const VectorXd score = plan_gradient(model, data, theta_hat, plan);
    out.draws.row(b) = (theta_hat - ldlt.solve(score)).transpose();
  }
  return out;
}

MalaResult mala_sample(const LogPosterior& target, const VectorXd& theta0,
                       const MalaConfig& config, long B) {
  const int d = static_cast<int>(theta0.size());
  double q0 = target.neg_log_density(theta0);
  if (!std::isfinite(q0))
    throw ConfigError("mala_sample: negative log-posterior not finite at theta0");

  MatrixXd M = config.preconditioner.size() > 0
                   ? config.preconditioner
                   : MatrixXd::Identity(d, d);
  Eigen::LLT<MatrixXd> llt(M);
  if (llt.info() != Eigen::Success)
    throw SingularityError("mala_sample: preconditioner not positive definite");
  const MatrixXd L = llt.matrixL();

  double gamma = config.gamma > 0.0 ? config.gamma : mala_heuristic_gamma(d);
  double log_gamma = std::log(gamma);

  RngStream rng(config.seed, 0, StreamPurpose::Mala);
  VectorXd theta = theta0;
  double q_cur = q0;
  VectorXd g_cur = target.gradient(theta);

  MalaResult out;
  out.draws.resize(B, d);
  long accepted_kept = 0;

  const long total = config.burn + B;
  for (long b = 0; b < total; ++b) {
    VectorXd xi(d);
    for (int j = 0; j < d; ++j) xi[j] = rng.normal();
    const double root = std::sqrt(2.0 * gamma);
    const VectorXd drift = theta - gamma * (M * g_cur);
    const VectorXd proposal = drift + root * (L * xi);

    const double q_prop = target.neg_log_density(proposal);
    bool accept = false;
    if (std::isfinite(q_prop)) {
      const VectorXd g_prop = target.gradient(proposal);
      // exact transition-density ratio under the preconditioned proposal
      const VectorXd fwd = L.triangularView<Eigen::Lower>().solve(proposal - drift);
      const VectorXd back = L.triangularView<Eigen::Lower>().solve(
          theta - (proposal - gamma * (M * g_prop)));
      const double log_ratio = (q_cur - q_prop) +
                               (fwd.squaredNorm() - back.squaredNorm()) / (4.0 * gamma);
      accept = std::log(rng.uniform()) <= log_ratio;
      if (accept) {
        theta = proposal;
        q_cur = q_prop;
        g_cur = g_prop;
      }
    }
    if (config.tune && b < config.burn) {
      // log-step stochastic approximation toward the target acceptance rate
      log_gamma += ((accept ? 1.0 : 0.0) - config.target_accept) /
                   std::sqrt(static_cast<double>(b + 1));
      gamma = std::exp(log_gamma);
    }
    if (b >= config.burn) {
      out.draws.row(b - config.burn) = theta.transpose();
      if (accept) ++accepted_kept;
    }
  }
  out.acceptance_rate = static_cast<double>(accepted_kept) / static_cast<double>(B);
  out.gamma_used = gamma;
  return out;
}

} // namespace rei
