#include "rei/engine.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "rei/models.hpp"

namespace rei {

namespace {

constexpr double kDivergenceGuard = 1e8;

double penalty_lambda(const PenaltyConfig& pen, long b, long burn) {
  if (!pen.enabled || b >= burn) return 0.0; // penalty vanishes after burn-in
  const long duration = pen.duration >= 0 ? pen.duration : burn / 2;
  if (b < duration) return pen.lambda0;
  return pen.lambda0 * std::pow(pen.decay, static_cast<double>(b - duration + 1));
}

struct ChainState {
  VectorXd theta;
  VectorXd theta_prev;
  std::optional<SecantBuffer> buffer;
};

// One method update against a given plan; shared by run_chain and the
// split-panel runner.
VectorXd chain_update(const ModelSpec& model, const Dataset& data, const RunConfig& config,
                      ChainState& state, const ResamplePlan& plan, double lambda_b,
                      long b, std::vector<FailureEvent>* log) {
  const long n = data.n();
  const double ridge = lambda_b / static_cast<double>(n);
  const VectorXd& anchor =
      config.penalty.anchor.size() > 0 ? config.penalty.anchor : config.theta0;

  EvalRequest want;
  want.value = false;
  want.gradient = true;
  want.hessian = config.method == Method::RNR;
  ObjectiveEvaluation eval = evaluate(model, data, state.theta, plan, want);
  VectorXd G = std::move(*eval.gradient);
  if (ridge > 0.0) G.noalias() += ridge * (state.theta - anchor);

  VectorXd step;
  switch (config.method) {
    case Method::RGD:
      step = config.gamma * G;
      break;
    case Method::RNR: {
      MatrixXd H = std::move(*eval.hessian);
      if (ridge > 0.0) H.diagonal().array() += ridge;
      NrOptions opts;
      opts.modify = config.nr_modify;
      ConditioningMatrix P = nr_conditioner(H, opts);
      if (P.fallback_used && log)
        log->push_back({b, "nr-fallback", "non-PD resampled hessian, used |eigenvalue| inversion"});
      step = config.gamma * (P.matrix * G);
      break;
    }
    case Method::RQN: {
      HvpCallback hvp = [&](const VectorXd& s) {
        VectorXd y = hessian_vector_product(model, data, state.theta, plan, s);
        if (ridge > 0.0) y.noalias() += ridge * s;
        return y;
      };
      QnStepResult qn = rqn_step(*state.buffer, state.theta, state.theta_prev, hvp, config.qn);
      if (qn.refreshes > 0 && log)
        log->push_back({b, "qn-refresh", std::to_string(qn.refreshes) + " direction refreshes"});
      step = config.gamma * (qn.conditioner.matrix * G);
      break;
    }
  }

  state.theta_prev = state.theta;
  state.theta -= step;
  if (!state.theta.allFinite() || state.theta.cwiseAbs().maxCoeff() > kDivergenceGuard)
    throw DivergenceError("chain diverged", b, state.theta_prev);
  return state.theta;
}

void init_qn_state(const ModelSpec& model, const Dataset& data, const RunConfig& config,
                   ChainState& state) {
  if (config.method != Method::RQN) return;
  // initial guess Hhat_0 = H_n(theta_0) on the full sample: a resampled H can
  // carry near-zero curvature for weakly weighted coordinates, and a poisoned
  // init stays in the secant window for L iterations
  EvalRequest want;
  want.value = false;
  want.hessian = true;
  MatrixXd H0 = *evaluate(model, data, config.theta0, unit_plan(data.n()), want).hessian;
  state.buffer = init_secant_buffer(
      H0, model.d_theta, config.qn,
      derive_stream(config.seed, 0, StreamPurpose::SecantInit));
}

} // namespace

DrawChain run_chain(const ModelSpec& model, const Dataset& data, const RunConfig& config) {
  config.validate();
  data.validate();
  if (config.theta0.size() != model.d_theta)
    throw ConfigError("run_chain: theta0 dimension mismatch");

  const long burn = config.resolved_burn();
  const long total = burn + config.B;
  const int d = model.d_theta;

  DrawChain chain;
  chain.config = config;
  chain.burned.resize(burn, d);
  chain.draws.resize(config.B, d);
  if (config.record_plans) chain.plans.reserve(total);

  ChainState state;
  state.theta = config.theta0;
  state.theta_prev = config.theta0;
  init_qn_state(model, data, config, state);

  for (long b = 0; b < total; ++b) {
    ResamplePlan plan = draw_plan_at(config.scheme, data, config.seed, b + 1);
    if (b == 0) chain.effective_m = plan.effective_m;
    const double lambda_b = penalty_lambda(config.penalty, b, burn);
    const VectorXd& theta = chain_update(model, data, config, state, plan, lambda_b, b,
                                         &chain.failure_log);
    if (b < burn)
      chain.burned.row(b) = theta.transpose();
    else
      chain.draws.row(b - burn) = theta.transpose();
    if (config.record_plans) chain.plans.push_back(std::move(plan));
  }
  return chain;
}

OptimizePath classical_optimize_core(const ModelSpec& model, const Dataset& data,
                                     ClassicalMethod method, double gamma, long iters,
                                     const VectorXd& theta0, const OptimizeOptions& options) {
  if (iters < 1) throw ConfigError("classical_optimize: iters must be >= 1");
  const ResamplePlan plan = unit_plan(data.n());
  OptimizePath out;
  out.path.resize(iters + 1, theta0.size());
  out.path.row(0) = theta0.transpose();

  VectorXd theta = theta0;
  EvalRequest want;
  want.value = false;
  want.gradient = true;
  want.hessian = method == ClassicalMethod::NR;

  long k = 0;
  for (; k < iters; ++k) {
    ObjectiveEvaluation eval = evaluate(model, data, theta, plan, want);
    const VectorXd& G = *eval.gradient;
    if (options.gradient_tol > 0.0 && G.cwiseAbs().maxCoeff() <= options.gradient_tol) {
      out.status = OptimizeStatus::Converged;
      break;
    }
    if (method == ClassicalMethod::NR) {
      NrOptions nr;
      nr.modify = options.modify;
      nr.ridge = options.ridge;
      try {
        theta -= gamma * (nr_conditioner(*eval.hessian, nr).matrix * G);
      } catch (const SingularityError&) {
        out.status = OptimizeStatus::Singular;
        break;
      }
    } else {
      theta -= gamma * G;
    }
    if (!theta.allFinite() || theta.cwiseAbs().maxCoeff() > kDivergenceGuard) {
      out.status = OptimizeStatus::Diverged;
      break;
    }
    out.path.row(k + 1) = theta.transpose();
  }
  out.iterations = k;
  out.path.conservativeResize(k + 1, Eigen::NoChange);
  out.final = out.path.row(out.path.rows() - 1).transpose();
  if (out.status == OptimizeStatus::MaxIterations && options.gradient_tol > 0.0) {
    // one last convergence check at the final iterate
    VectorXd G = plan_gradient(model, data, out.final, plan);
    if (G.cwiseAbs().maxCoeff() <= options.gradient_tol) out.status = OptimizeStatus::Converged;
  }
  return out;
}

OptimizePath classical_optimize(const ModelSpec& model, const Dataset& data,
                                ClassicalMethod method, double gamma, long iters,
                                const VectorXd& theta0, const OptimizeOptions& options) {
  OptimizePath out = classical_optimize_core(model, data, method, gamma, iters, theta0, options);
  if (out.status == OptimizeStatus::Diverged)
    throw DivergenceError("classical_optimize diverged", out.iterations, out.final);
  return out;
}

VectorXd fit_mle(const ModelSpec& model, const Dataset& data, const VectorXd& theta0,
                 long max_iters, double tol, const OptimizeOptions& options) {
  OptimizeOptions opts = options;
  opts.gradient_tol = tol;
  OptimizePath path =
      classical_optimize(model, data, ClassicalMethod::NR, 1.0, max_iters, theta0, opts);
  if (path.status != OptimizeStatus::Converged)
    throw DivergenceError("fit_mle did not reach the gradient tolerance",
                          path.iterations, path.final);
  return path.final;
}

SgdResult run_sgd(const ModelSpec& model, const Dataset& data, double gamma0,
                  double delta, long m, long iters, const VectorXd& theta0,
                  std::uint64_t seed) {
  if (!(delta > 0.5 && delta <= 1.0))
    throw ConfigError("run_sgd: delta must be in (1/2, 1]");
  if (gamma0 <= 0.0) throw ConfigError("run_sgd: gamma0 must be > 0");
  if (iters < 1) throw ConfigError("run_sgd: iters must be >= 1");

  SchemeConfig scheme;
  scheme.scheme = Scheme::MOutOfN;
  scheme.m = m;

  VectorXd theta = theta0;
  VectorXd polyak = VectorXd::Zero(theta0.size());
  for (long k = 1; k <= iters; ++k) {
    ResamplePlan plan = draw_plan_at(scheme, data, seed, static_cast<std::uint64_t>(k));
    const double gamma_k = gamma0 * std::pow(static_cast<double>(k), -delta);
    theta -= gamma_k * plan_gradient(model, data, theta, plan);
    if (!theta.allFinite() || theta.cwiseAbs().maxCoeff() > kDivergenceGuard)
      throw DivergenceError("run_sgd diverged", k, polyak);
    polyak += (theta - polyak) / static_cast<double>(k);
  }
  return {theta, polyak};
}

// ---------------------------------------------------------------------------
// Split panel
// ---------------------------------------------------------------------------

namespace {

Dataset subset_rows(const Dataset& data, const std::vector<int>& keep) {
  Dataset out;
  out.rows.resize(static_cast<long>(keep.size()), data.width());
  std::vector<int> cluster(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.rows.row(static_cast<long>(r)) = data.rows.row(keep[r]);
    cluster[r] = (*data.unit_ids)[keep[r]];
  }
  out.cluster_ids = std::move(cluster);
  return out;
}

std::vector<std::vector<int>> rows_by_unit(const Dataset& data) {
  std::vector<std::vector<int>> out(data.panel->n_units);
  for (long i = 0; i < data.n(); ++i) out[(*data.unit_ids)[i]].push_back(static_cast<int>(i));
  return out;
}

} // namespace

SplitPanelResult run_split_panel(const ModelSpec& model, const Dataset& data,
                                 const RunConfig& config) {
  config.validate();
  data.validate();
  if (!data.panel) throw ConfigError("run_split_panel: dataset has no panel shape");
  const int T = data.panel->T;
  const int half_T = T / 2; // odd T splits floor(T/2) / T - floor(T/2)
  const int n_units = data.panel->n_units;

  // half datasets by time; unit structure preserved
  std::vector<int> keep1, keep2;
  for (long i = 0; i < data.n(); ++i)
    ((*data.time_ids)[i] < half_T ? keep1 : keep2).push_back(static_cast<int>(i));
  const Dataset data1 = subset_rows(data, keep1);
  const Dataset data2 = subset_rows(data, keep2);

  const Dataset* datasets[3] = {&data, &data1, &data2};
  const auto units_full = rows_by_unit(data);
  std::vector<std::vector<int>> units_h1(n_units), units_h2(n_units);
  for (long r = 0; r < data1.n(); ++r) units_h1[(*data1.cluster_ids)[r]].push_back(static_cast<int>(r));
  for (long r = 0; r < data2.n(); ++r) units_h2[(*data2.cluster_ids)[r]].push_back(static_cast<int>(r));
  const std::vector<std::vector<int>>* unit_rows[3] = {&units_full, &units_h1, &units_h2};

  const long burn = config.resolved_burn();
  const long total = burn + config.B;
  const int d = model.d_theta;
  const bool weight_scheme = config.scheme.scheme != Scheme::MOutOfN;
  long m_units = config.scheme.m > 0 ? config.scheme.m : n_units / 2;
  if (m_units > n_units) m_units = n_units;

  SplitPanelResult result;
  DrawChain* chains[3] = {&result.full, &result.half1, &result.half2};
  ChainState states[3];
  for (int c = 0; c < 3; ++c) {
    chains[c]->config = config;
    chains[c]->burned.resize(burn, d);
    chains[c]->draws.resize(config.B, d);
    states[c].theta = config.theta0;
    states[c].theta_prev = config.theta0;
    if (config.method == Method::RQN) {
      // per-chain full-sample H0, as in run_chain
      EvalRequest want;
      want.value = false;
      want.hessian = true;
      MatrixXd H0 = *evaluate(model, *datasets[c], config.theta0,
                              unit_plan(datasets[c]->n()), want).hessian;
      states[c].buffer = init_secant_buffer(
          H0, d, config.qn,
          derive_stream(config.seed, static_cast<std::uint64_t>(c), StreamPurpose::SecantInit));
    }
  }
  result.corrected.config = config;
  result.corrected.burned.resize(burn, d);
  result.corrected.draws.resize(config.B, d);
  result.unit_draws.reserve(total);

  for (long b = 0; b < total; ++b) {
    RngStream rng = derive_stream(config.seed, static_cast<std::uint64_t>(b + 1),
                                  StreamPurpose::Plan);
    // one shared unit set (or unit weight vector) per iteration
    std::vector<int> units;
    VectorXd unit_weights;
    if (weight_scheme) {
      SchemeConfig unit_scheme = config.scheme;
      unit_scheme.cluster_aware = false;
      Dataset unit_level = dummy_dataset(n_units);
      unit_weights = draw_plan(unit_scheme, unit_level, rng).weights;
    } else {
      units.resize(m_units);
      for (long j = 0; j < m_units; ++j)
        units[j] = static_cast<int>(rng.uniform_int(n_units));
      result.unit_draws.push_back(units);
    }

    const double lambda_b = penalty_lambda(config.penalty, b, burn);
    for (int c = 0; c < 3; ++c) {
      ResamplePlan plan;
      if (weight_scheme) {
        VectorXd w(datasets[c]->n());
        for (long i = 0; i < datasets[c]->n(); ++i)
          w[i] = unit_weights[(*datasets[c]->cluster_ids)[i]];
        plan = ResamplePlan::from_weights(std::move(w));
      } else {
        std::vector<int> idx;
        for (int u : units)
          idx.insert(idx.end(), (*unit_rows[c])[u].begin(), (*unit_rows[c])[u].end());
        const long eff = static_cast<long>(std::llround(
            static_cast<double>(m_units) * datasets[c]->n() / static_cast<double>(n_units)));
        plan = ResamplePlan::from_indices(std::move(idx), eff);
      }
      if (b == 0) chains[c]->effective_m = plan.effective_m;
      const VectorXd& theta = chain_update(model, *datasets[c], config, states[c], plan,
                                           lambda_b, b, &chains[c]->failure_log);
      if (b < burn)
        chains[c]->burned.row(b) = theta.transpose();
      else
        chains[c]->draws.row(b - burn) = theta.transpose();
    }
    const Eigen::RowVectorXd corrected =
        2.0 * states[0].theta.transpose() -
        0.5 * (states[1].theta.transpose() + states[2].theta.transpose());
    if (b < burn)
      result.corrected.burned.row(b) = corrected;
    else
      result.corrected.draws.row(b - burn) = corrected;
  }
  result.corrected.effective_m = result.full.effective_m;
  return result;
}

CouplingOracle build_coupling_oracle(const ModelSpec& model, const Dataset& data,
                                     const VectorXd& theta_hat, Method method,
                                     double gamma) {
  EvalRequest want;
  want.value = false;
  want.hessian = true;
  const MatrixXd H =
      *evaluate(model, data, theta_hat, unit_plan(data.n()), want).hessian;
  const long d = H.rows();
  CouplingOracle oracle;
  oracle.theta_hat = theta_hat;
  if (method == Method::RGD) {
    oracle.Pbar = MatrixXd::Identity(d, d);
    oracle.Psi = MatrixXd::Identity(d, d) - gamma * H;
  } else {
    oracle.Pbar = H.ldlt().solve(MatrixXd::Identity(d, d));
    oracle.Psi = (1.0 - gamma) * MatrixXd::Identity(d, d);
  }
  return oracle;
}

MatrixXd coupling_oracle_simulate(const CouplingOracle& oracle, const DrawChain& chain,
                                  const ModelSpec& model, const Dataset& data) {
  const long total = chain.burn() + chain.B();
  if (static_cast<long>(chain.plans.size()) != total)
    throw ConfigError("coupling_oracle_simulate: chain has no recorded plans");
  const double gamma = chain.config.gamma;

  MatrixXd path(total, oracle.theta_hat.size());
  VectorXd star = chain.config.theta0;
  for (long b = 0; b < total; ++b) {
    const VectorXd G = plan_gradient(model, data, oracle.theta_hat, chain.plans[b]);
    star = oracle.theta_hat + oracle.Psi * (star - oracle.theta_hat) -
           gamma * (oracle.Pbar * G);
    path.row(b) = star.transpose();
  }
  return path;
}

} // namespace rei
