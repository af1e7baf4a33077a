#include "rei/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>

#include "rei/baselines.hpp"
#include "rei/csv.hpp"
#include "rei/inference.hpp"
#include "rei/models.hpp"
#include "rei/parallel.hpp"

namespace rei::cli {

namespace {

using nlohmann::json;

struct Settings {
  std::string command;
  // data + model
  std::string data_path;
  std::string model = "ols"; // ols | probit
  std::string outcome;
  std::vector<std::string> regressors;
  bool intercept = true;
  std::string cluster_col, unit_col, time_col;
  // dgp (mc)
  std::string dgp = "linear-gaussian"; // linear-gaussian | probit | nonlinear-panel
  long n = 200;
  long n_units = 16;
  long T = 20;
  std::vector<double> theta_true;
  long replications = 100;
  // run config
  double gamma = 0.1;
  long B = 1000;
  long burn = -1;
  std::string method = "rqn";
  std::string scheme = "gaussian"; // m-out-of-n | gaussian | exponential | poisson | unit
  long m = 0;
  bool cluster_aware = false;
  bool demean = false;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::vector<double> theta0;
  bool nr_modify = false;
  // penalty
  bool penalty_enabled = false;
  double penalty_lambda0 = 20.0;
  double penalty_decay = 0.9;
  long penalty_duration = -1;
  // quasi-Newton tuning
  long qn_L = 0;
  double qn_lambda_S = 1e-6;
  double qn_lambda_min = 1e-4;
  long qn_max_refresh = 0;
  // compare extras
  std::vector<std::string> methods = {"rnr", "rqn"};
  long dmk_k = 1;
  double mala_gamma = 0.0;
  bool mala_tune = true;
  double sgd_gamma0 = 0.5;
  double sgd_delta = 0.625;
  long sgd_m = 1;
  long sgd_iters = 100000;
  // saddle demo
  std::vector<double> c_grid = {0.0, 0.1, 0.5, 1.0, 5.0};
  long saddle_iterations = 50;
  long saddle_seeds = 100;
  double saddle_noise_sd = 10.0;
  // io
  std::string out_dir;
  long threads = 0;
};

json settings_to_json(const Settings& s) {
  json j;
  j["command"] = s.command;
  j["data"] = s.data_path;
  j["model"] = s.model;
  j["columns.outcome"] = s.outcome;
  j["columns.regressors"] = s.regressors;
  j["columns.intercept"] = s.intercept;
  j["columns.cluster"] = s.cluster_col;
  j["columns.unit"] = s.unit_col;
  j["columns.time"] = s.time_col;
  j["dgp"] = s.dgp;
  j["n"] = s.n;
  j["n_units"] = s.n_units;
  j["T"] = s.T;
  j["theta_true"] = s.theta_true;
  j["replications"] = s.replications;
  j["gamma"] = s.gamma;
  j["B"] = s.B;
  j["burn"] = s.burn;
  j["method"] = s.method;
  j["scheme"] = s.scheme;
  j["m"] = s.m;
  j["cluster_aware"] = s.cluster_aware;
  j["demean"] = s.demean;
  j["seed"] = s.seed;
  j["alpha"] = s.alpha;
  j["theta0"] = s.theta0;
  j["nr_modify"] = s.nr_modify;
  j["penalty.enabled"] = s.penalty_enabled;
  j["penalty.lambda0"] = s.penalty_lambda0;
  j["penalty.decay"] = s.penalty_decay;
  j["penalty.duration"] = s.penalty_duration;
  j["qn.L"] = s.qn_L;
  j["qn.lambda_S"] = s.qn_lambda_S;
  j["qn.lambda_min"] = s.qn_lambda_min;
  j["qn.max_refresh"] = s.qn_max_refresh;
  j["methods"] = s.methods;
  j["dmk.k"] = s.dmk_k;
  j["mala.gamma"] = s.mala_gamma;
  j["mala.tune"] = s.mala_tune;
  j["sgd.gamma0"] = s.sgd_gamma0;
  j["sgd.delta"] = s.sgd_delta;
  j["sgd.m"] = s.sgd_m;
  j["sgd.iters"] = s.sgd_iters;
  j["saddle.c_grid"] = s.c_grid;
  j["saddle.iterations"] = s.saddle_iterations;
  j["saddle.seeds"] = s.saddle_seeds;
  j["saddle.noise_sd"] = s.saddle_noise_sd;
  j["out"] = s.out_dir;
  j["threads"] = s.threads;
  return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_json(const json& j, Settings& s) {
  maybe(j, "data", s.data_path);
  maybe(j, "model", s.model);
  maybe(j, "columns.outcome", s.outcome);
  maybe(j, "columns.regressors", s.regressors);
  maybe(j, "columns.intercept", s.intercept);
  maybe(j, "columns.cluster", s.cluster_col);
  maybe(j, "columns.unit", s.unit_col);
  maybe(j, "columns.time", s.time_col);
  maybe(j, "dgp", s.dgp);
  maybe(j, "n", s.n);
  maybe(j, "n_units", s.n_units);
  maybe(j, "T", s.T);
  maybe(j, "theta_true", s.theta_true);
  maybe(j, "replications", s.replications);
  maybe(j, "gamma", s.gamma);
  maybe(j, "B", s.B);
  maybe(j, "burn", s.burn);
  maybe(j, "method", s.method);
  maybe(j, "scheme", s.scheme);
  maybe(j, "m", s.m);
  maybe(j, "cluster_aware", s.cluster_aware);
  maybe(j, "demean", s.demean);
  maybe(j, "seed", s.seed);
  maybe(j, "alpha", s.alpha);
  maybe(j, "theta0", s.theta0);
  maybe(j, "nr_modify", s.nr_modify);
  maybe(j, "penalty.enabled", s.penalty_enabled);
  maybe(j, "penalty.lambda0", s.penalty_lambda0);
  maybe(j, "penalty.decay", s.penalty_decay);
  maybe(j, "penalty.duration", s.penalty_duration);
  maybe(j, "qn.L", s.qn_L);
  maybe(j, "qn.lambda_S", s.qn_lambda_S);
  maybe(j, "qn.lambda_min", s.qn_lambda_min);
  maybe(j, "qn.max_refresh", s.qn_max_refresh);
  maybe(j, "methods", s.methods);
  maybe(j, "dmk.k", s.dmk_k);
  maybe(j, "mala.gamma", s.mala_gamma);
  maybe(j, "mala.tune", s.mala_tune);
  maybe(j, "sgd.gamma0", s.sgd_gamma0);
  maybe(j, "sgd.delta", s.sgd_delta);
  maybe(j, "sgd.m", s.sgd_m);
  maybe(j, "sgd.iters", s.sgd_iters);
  maybe(j, "saddle.c_grid", s.c_grid);
  maybe(j, "saddle.iterations", s.saddle_iterations);
  maybe(j, "saddle.seeds", s.saddle_seeds);
  maybe(j, "saddle.noise_sd", s.saddle_noise_sd);
  maybe(j, "out", s.out_dir);
  maybe(j, "threads", s.threads);
}

SchemeConfig scheme_from(const Settings& s, long n) {
  SchemeConfig cfg;
  if (s.scheme == "m-out-of-n") cfg.scheme = Scheme::MOutOfN;
  else if (s.scheme == "gaussian") cfg.scheme = Scheme::GaussianWeights;
  else if (s.scheme == "exponential") cfg.scheme = Scheme::ExponentialWeights;
  else if (s.scheme == "poisson") cfg.scheme = Scheme::PoissonWeights;
  else if (s.scheme == "unit") cfg.scheme = Scheme::Unit;
  else throw ConfigError("unknown scheme '" + s.scheme + "'");
  cfg.m = s.m > 0 ? s.m : n;
  cfg.cluster_aware = s.cluster_aware;
  cfg.demean = s.demean;
  return cfg;
}

Method method_from(const std::string& name) {
  if (name == "rgd") return Method::RGD;
  if (name == "rnr") return Method::RNR;
  if (name == "rqn") return Method::RQN;
  throw ConfigError("unknown method '" + name + "'");
}

struct LoadedProblem {
  Dataset data;
  ModelSpec model;
  std::vector<std::string> names;
};

LoadedProblem load_problem(const Settings& s) {
  if (s.data_path.empty()) throw ConfigError("fit/compare/check need --data");
  if (s.outcome.empty() || s.regressors.empty())
    throw ConfigError("column map needs --outcome and --regressors");
  ColumnMap map;
  map.outcome = s.outcome;
  map.regressors = s.regressors;
  map.add_intercept = s.intercept;
  map.cluster = s.cluster_col;
  map.unit = s.unit_col;
  map.time = s.time_col;

  LoadedProblem p;
  p.data = load_dataset(s.data_path, map);
  p.names = s.regressors;
  if (s.intercept) p.names.push_back("const");
  const int d = static_cast<int>(p.names.size());
  if (s.model == "ols") p.model = make_ols(d);
  else if (s.model == "probit") p.model = make_probit(d);
  else throw ConfigError("unknown model '" + s.model + "'");
  return p;
}

VectorXd resolve_theta0(const Settings& s, const LoadedProblem& p) {
  if (!s.theta0.empty()) {
    if (static_cast<int>(s.theta0.size()) != p.model.d_theta)
      throw ConfigError("theta0 has wrong length");
    return Eigen::Map<const VectorXd>(s.theta0.data(), s.theta0.size());
  }
  if (p.model.name == "probit") return probit_start_from_lpm(p.data);
  return VectorXd::Zero(p.model.d_theta);
}

RunConfig run_config_from(const Settings& s, const Dataset& data, const VectorXd& theta0) {
  RunConfig cfg;
  cfg.gamma = s.gamma;
  cfg.B = s.B;
  cfg.burn = s.burn;
  cfg.scheme = scheme_from(s, data.n());
  cfg.method = method_from(s.method);
  cfg.theta0 = theta0;
  cfg.seed = s.seed;
  cfg.nr_modify = s.nr_modify;
  cfg.penalty.enabled = s.penalty_enabled;
  cfg.penalty.lambda0 = s.penalty_lambda0;
  cfg.penalty.decay = s.penalty_decay;
  cfg.penalty.duration = s.penalty_duration;
  cfg.qn.L = static_cast<int>(s.qn_L);
  cfg.qn.lambda_S = s.qn_lambda_S;
  cfg.qn.lambda_min = s.qn_lambda_min;
  cfg.qn.max_refresh = static_cast<int>(s.qn_max_refresh);
  return cfg;
}

// ---------------------------------------------------------------------------
// output writers
// ---------------------------------------------------------------------------

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

std::string join_path(const std::string& dir, const std::string& file) {
  return dir.empty() ? file : dir + "/" + file;
}

void write_draws_csv(const std::string& path, const DrawChain& chain,
                     const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "b,phase";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (long b = 0; b < chain.burn(); ++b) {
    out << (b + 1) << ",burn";
    for (long j = 0; j < chain.burned.cols(); ++j) out << ',' << fmt(chain.burned(b, j));
    out << '\n';
  }
  for (long b = 0; b < chain.B(); ++b) {
    out << (b + 1) << ",keep";
    for (long j = 0; j < chain.draws.cols(); ++j) out << ',' << fmt(chain.draws(b, j));
    out << '\n';
  }
}

void write_report_csv(const std::string& path, const InferenceReport& rep,
                      const std::vector<std::string>& names, const std::string& method) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "coefficient,estimate,se,ci_lo,ci_hi,autocorr1,method\n";
  for (std::size_t j = 0; j < rep.coefficients.size(); ++j) {
    const auto& c = rep.coefficients[j];
    out << names[j] << ',' << fmt(c.estimate) << ',' << fmt(c.se) << ','
        << fmt(c.ci_lo) << ',' << fmt(c.ci_hi) << ',' << fmt(c.autocorr1) << ','
        << method << '\n';
  }
}

json report_to_json(const InferenceReport& rep, const std::vector<std::string>& names,
                    const std::string& method) {
  json coeffs = json::array();
  for (std::size_t j = 0; j < rep.coefficients.size(); ++j) {
    const auto& c = rep.coefficients[j];
    coeffs.push_back({{"coefficient", names[j]},
                      {"estimate", c.estimate},
                      {"se", c.se},
                      {"ci_lo", c.ci_lo},
                      {"ci_hi", c.ci_hi},
                      {"autocorr1", c.autocorr1},
                      {"method", method}});
  }
  return json{{"coefficients", coeffs},
              {"phi_gamma", rep.phi_gamma},
              {"adjustment", rep.adjustment},
              {"alpha", rep.alpha},
              {"B", rep.B},
              {"n", rep.n},
              {"effective_m", rep.effective_m}};
}

json failures_to_json(const std::vector<FailureEvent>& log) {
  json arr = json::array();
  for (const auto& e : log) arr.push_back({{"b", e.b}, {"event", e.event}, {"detail", e.detail}});
  return arr;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_fit(const Settings& s) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedProblem p = load_problem(s);
  const VectorXd theta0 = resolve_theta0(s, p);
  const RunConfig cfg = run_config_from(s, p.data, theta0);

  const DrawChain chain = run_chain(p.model, p.data, cfg);
  const InferenceReport rep = summarize(chain, s.alpha, p.data.n());

  ensure_dir(s.out_dir);
  write_draws_csv(join_path(s.out_dir, "draws.csv"), chain, p.names);
  write_report_csv(join_path(s.out_dir, "report.csv"), rep, p.names, s.method);
  write_json(join_path(s.out_dir, "report.json"),
             {{"config", settings_to_json(s)},
              {"report", report_to_json(rep, p.names, s.method)}});
  const double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0).count();
  write_json(join_path(s.out_dir, "diagnostics.json"),
             {{"config", settings_to_json(s)},
              {"failure_log", failures_to_json(chain.failure_log)},
              {"wall_time_ms", ms}});
  {
    // one JSON object per safeguard event
    std::ofstream log(join_path(s.out_dir, "failures.jsonl"));
    for (const auto& e : chain.failure_log)
      log << json{{"b", e.b}, {"event", e.event}, {"detail", e.detail}}.dump() << '\n';
  }
  return 0;
}

struct McAccumulator {
  long count = 0;
  VectorXd sum, sumsq;
  Eigen::VectorXi reject_quantile, reject_se;
};

int cmd_mc(const Settings& s) {
  const auto t0 = std::chrono::steady_clock::now();
  if (s.replications < 1) throw ConfigError("mc: replications must be >= 1");

  const bool panel = s.dgp == "nonlinear-panel";
  DgpConfig base;
  if (s.dgp == "linear-gaussian") base.kind = DgpKind::LinearGaussian;
  else if (s.dgp == "probit") base.kind = DgpKind::ProbitDgp;
  else if (panel) base.kind = DgpKind::NonlinearPanel;
  else throw ConfigError("unknown dgp '" + s.dgp + "'");
  base.n = s.n;
  base.n_units = static_cast<int>(s.n_units);
  base.T = static_cast<int>(s.T);
  if (!s.theta_true.empty())
    base.theta = Eigen::Map<const VectorXd>(s.theta_true.data(), s.theta_true.size());
  else if (panel)
    base.theta = VectorXd::Constant(1, 1.0);
  else {
    base.theta = VectorXd::Zero(3);
    base.theta << 1.0, 0.5, -0.5;
  }

  // truth under test: the log-variance coordinate for the panel dgp
  const VectorXd truth = panel ? VectorXd::Constant(1, std::log(base.theta[0]))
                               : base.theta;
  const long d_report = truth.size();
  const double z = 1.959963984540054; // N(0,1) 97.5% quantile

  struct RepResult {
    bool ok = false;
    VectorXd estimate;
    Eigen::VectorXi rq, rs;
    std::string error;
  };
  std::vector<RepResult> results(s.replications);

  parallel_for(s.replications, [&](long r) {
    RepResult& res = results[r];
    try {
      DgpConfig dgp = base;
      dgp.seed = replication_seed(s.seed, static_cast<std::uint64_t>(r));
      const SimulatedData sim = simulate_dgp(dgp);

      ModelSpec model;
      if (base.kind == DgpKind::LinearGaussian) model = make_ols(static_cast<int>(base.theta.size()));
      else if (base.kind == DgpKind::ProbitDgp) model = make_probit(static_cast<int>(base.theta.size()));
      else model = make_panel_variance_model(static_cast<int>(s.n_units));

      VectorXd theta0;
      if (panel) {
        theta0 = VectorXd::Zero(model.d_theta);
        theta0.tail(s.n_units) = sim.theta_true.tail(s.n_units);
      } else if (base.kind == DgpKind::ProbitDgp) {
        theta0 = probit_start_from_lpm(sim.data);
      } else {
        theta0 = VectorXd::Zero(model.d_theta);
      }

      Settings rep_settings = s;
      rep_settings.seed = dgp.seed + 1;
      const RunConfig cfg = run_config_from(rep_settings, sim.data, theta0);

      DrawChain chain;
      if (panel) {
        chain = run_split_panel(model, sim.data, cfg).corrected;
      } else {
        chain = run_chain(model, sim.data, cfg);
      }
      const InferenceReport rep = summarize(chain, s.alpha, sim.data.n());

      res.estimate.resize(d_report);
      res.rq.resize(d_report);
      res.rs.resize(d_report);
      for (long j = 0; j < d_report; ++j) {
        const auto& c = rep.coefficients[static_cast<std::size_t>(j)];
        res.estimate[j] = c.estimate;
        res.rq[j] = (truth[j] < c.ci_lo || truth[j] > c.ci_hi) ? 1 : 0;
        const double t = c.se > 0.0 ? std::abs(c.estimate - truth[j]) / c.se
                                    : std::numeric_limits<double>::infinity();
        res.rs[j] = t > z ? 1 : 0;
      }
      res.ok = true;
    } catch (const std::exception& e) {
      res.error = e.what();
    }
  }, static_cast<unsigned>(s.threads));

  McAccumulator acc;
  acc.sum = VectorXd::Zero(d_report);
  acc.sumsq = VectorXd::Zero(d_report);
  acc.reject_quantile = Eigen::VectorXi::Zero(d_report);
  acc.reject_se = Eigen::VectorXi::Zero(d_report);
  json failures = json::array();
  for (long r = 0; r < s.replications; ++r) {
    if (!results[r].ok) {
      failures.push_back({{"replication", r}, {"error", results[r].error}});
      continue;
    }
    ++acc.count;
    acc.sum += results[r].estimate;
    acc.sumsq += results[r].estimate.cwiseAbs2();
    acc.reject_quantile += results[r].rq;
    acc.reject_se += results[r].rs;
  }
  if (acc.count == 0) throw NumericalEvalError("mc: every replication failed", -1);

  std::vector<std::string> names;
  if (panel) names.push_back("log_v");
  else for (long j = 0; j < d_report; ++j) names.push_back("theta_" + std::to_string(j + 1));

  ensure_dir(s.out_dir);
  std::ofstream out(join_path(s.out_dir, "mc_summary.csv"));
  out << "coefficient,truth,mean_estimate,sd_estimate,rejection_quantile,rejection_se,"
         "replications\n";
  json rows = json::array();
  for (long j = 0; j < d_report; ++j) {
    const double mean = acc.sum[j] / acc.count;
    const double var = acc.sumsq[j] / acc.count - mean * mean;
    const double sd = std::sqrt(std::max(0.0, var) * acc.count / std::max<long>(1, acc.count - 1));
    const double rq = static_cast<double>(acc.reject_quantile[j]) / acc.count;
    const double rs = static_cast<double>(acc.reject_se[j]) / acc.count;
    out << names[j] << ',' << fmt(truth[j]) << ',' << fmt(mean) << ',' << fmt(sd) << ','
        << fmt(rq) << ',' << fmt(rs) << ',' << acc.count << '\n';
    rows.push_back({{"coefficient", names[j]},
                    {"truth", truth[j]},
                    {"mean_estimate", mean},
                    {"sd_estimate", sd},
                    {"rejection_quantile", rq},
                    {"rejection_se", rs}});
  }
  const double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0).count();
  const bool flagged = failures.size() * 20 > static_cast<std::size_t>(s.replications);
  write_json(join_path(s.out_dir, "mc_summary.json"),
             {{"config", settings_to_json(s)},
              {"rows", rows},
              {"replications", s.replications},
              {"failed_replications", failures},
              {"flagged", flagged},
              {"wall_time_ms", ms}});
  return 0;
}

int cmd_compare(const Settings& s) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedProblem p = load_problem(s);
  const long n = p.data.n();
  const int d = p.model.d_theta;
  const VectorXd start = resolve_theta0(s, p);
  const VectorXd theta_hat = fit_mle(p.model, p.data, start);

  ensure_dir(s.out_dir);
  std::ofstream out(join_path(s.out_dir, "compare.csv"));
  out << "coefficient,estimate,se,ci_lo,ci_hi,autocorr1,method\n";
  json diagnostics = json::object();

  auto emit_chain = [&](const DrawChain& chain, const std::string& method) {
    const InferenceReport rep = summarize(chain, s.alpha, n);
    for (std::size_t j = 0; j < rep.coefficients.size(); ++j) {
      const auto& c = rep.coefficients[j];
      out << p.names[j] << ',' << fmt(c.estimate) << ',' << fmt(c.se) << ','
          << fmt(c.ci_lo) << ',' << fmt(c.ci_hi) << ',' << fmt(c.autocorr1) << ','
          << method << '\n';
    }
  };
  auto emit_draws = [&](const BootstrapDraws& draws, double m_ratio, const std::string& method) {
    const VectorXd mean = draws.mean();
    const VectorXd sd = draws.sd();
    for (int j = 0; j < d; ++j) {
      std::vector<double> col(draws.draws.col(j).data(),
                              draws.draws.col(j).data() + draws.draws.rows());
      const double lo = quantile(col, s.alpha / 2.0);
      const double hi = quantile(col, 1.0 - s.alpha / 2.0);
      // lag-1 autocorrelation of independent replications is reported as-is
      const long B = draws.draws.rows();
      double num = 0.0, den = 0.0;
      for (long b = 0; b < B; ++b) {
        const double c = draws.draws(b, j) - mean[j];
        den += c * c;
        if (b > 0) num += c * (draws.draws(b - 1, j) - mean[j]);
      }
      out << p.names[j] << ',' << fmt(mean[j]) << ',' << fmt(std::sqrt(m_ratio) * sd[j])
          << ',' << fmt(lo) << ',' << fmt(hi) << ','
          << fmt(den > 0 ? num / den : 0.0) << ',' << method << '\n';
    }
  };

  for (const std::string& method : s.methods) {
    try {
      if (method == "rnr" || method == "rqn" || method == "rgd") {
        Settings ms = s;
        ms.method = method;
        const RunConfig cfg = run_config_from(ms, p.data, start);
        emit_chain(run_chain(p.model, p.data, cfg), method);
      } else if (method == "boot" || method == "dmk") {
        const SchemeConfig scheme = scheme_from(s, n);
        const double m_ratio =
            scheme.scheme == Scheme::MOutOfN
                ? static_cast<double>(scheme.m) / static_cast<double>(n)
                : 1.0;
        const BootstrapDraws draws =
            method == "boot"
                ? standard_bootstrap(p.model, p.data, theta_hat, scheme, s.B, s.seed)
                : dmk_kstep(p.model, p.data, theta_hat, static_cast<int>(s.dmk_k), scheme,
                            s.B, s.seed);
        if (method == "boot")
          diagnostics["boot_nonconverged"] = draws.nonconverged_count;
        emit_draws(draws, m_ratio, method);
      } else if (method == "ks") {
        SchemeConfig scheme = scheme_from(s, n);
        if (scheme.scheme == Scheme::MOutOfN) scheme.scheme = Scheme::GaussianWeights;
        scheme.demean = true;
        emit_draws(ks_score(p.model, p.data, theta_hat, scheme, s.B, s.seed), 1.0, "ks");
      } else if (method == "mala") {
        // posterior exp(-n Q_n) with a flat prior, preconditioned at the mode
        const ModelSpec model = p.model;
        const Dataset& data = p.data;
        LogPosterior target;
        target.neg_log_density = [&model, &data, n](const VectorXd& t) {
          EvalRequest want;
          return static_cast<double>(n) *
                 evaluate(model, data, t, unit_plan(n), want).value;
        };
        target.gradient = [&model, &data, n](const VectorXd& t) {
          return VectorXd(static_cast<double>(n) *
                          plan_gradient(model, data, t, unit_plan(n)));
        };
        EvalRequest want;
        want.value = false;
        want.hessian = true;
        const MatrixXd H =
            *evaluate(model, data, theta_hat, unit_plan(n), want).hessian;
        MalaConfig cfg;
        cfg.preconditioner =
            (static_cast<double>(n) * H).ldlt().solve(MatrixXd::Identity(d, d));
        cfg.gamma = s.mala_gamma;
        cfg.tune = s.mala_tune;
        cfg.burn = std::max<long>(2000, run_config_from(s, p.data, start).resolved_burn());
        cfg.seed = s.seed;
        const MalaResult mala = mala_sample(target, theta_hat, cfg, s.B);
        diagnostics["acceptance_rate"] = mala.acceptance_rate;
        diagnostics["mala_gamma_used"] = mala.gamma_used;
        DrawChain chain;
        chain.draws = mala.draws;
        chain.burned.resize(0, d);
        chain.config.gamma = 1.0; // no chain-variance deflation applies
        chain.config.theta0 = theta_hat;
        chain.effective_m = n;
        emit_chain(chain, "mala");
      } else if (method == "sgd") {
        const SgdResult sgd = run_sgd(p.model, p.data, s.sgd_gamma0, s.sgd_delta,
                                      s.sgd_m > 0 ? s.sgd_m : 1, s.sgd_iters, start, s.seed);
        for (int j = 0; j < d; ++j)
          out << p.names[j] << ',' << fmt(sgd.polyak[j]) << ",nan,nan,nan,nan,sgd\n";
      } else {
        throw ConfigError("unknown compare method '" + method + "'");
      }
    } catch (const ConfigError&) {
      throw; // configuration problems abort the whole command
    } catch (const std::exception& e) {
      diagnostics["failed_" + method] = e.what(); // numerical failures isolate
    }
  }
  const double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0).count();
  diagnostics["wall_time_ms"] = ms;
  write_json(join_path(s.out_dir, "compare.json"),
             {{"config", settings_to_json(s)}, {"diagnostics", diagnostics}});
  return 0;
}

int cmd_check(const Settings& s) {
  RngStream rng(s.seed, 0, StreamPurpose::Start);
  const int points = 20;
  bool all_ok = true;

  auto report = [&](const std::string& name, const ModelSpec& model, const Dataset& data,
                    const std::function<VectorXd()>& draw_theta) {
    double worst = 0.0;
    for (int r = 0; r < points; ++r)
      worst = std::max(worst, check_gradient(model, data, draw_theta()));
    const bool ok = worst <= 1e-5;
    all_ok = all_ok && ok;
    std::printf("%-16s max relative discrepancy %.3e  [%s]\n", name.c_str(), worst,
                ok ? "ok" : "FAIL");
  };

  {
    DgpConfig cfg;
    cfg.kind = DgpKind::LinearGaussian;
    cfg.n = 300;
    cfg.theta = VectorXd::Zero(3);
    cfg.theta << 1.0, 0.5, -0.5;
    cfg.seed = s.seed + 1;
    const auto sim = simulate_dgp(cfg);
    report("ols", make_ols(3), sim.data, [&] {
      VectorXd t(3);
      for (int j = 0; j < 3; ++j) t[j] = rng.normal();
      return t;
    });
  }
  {
    DgpConfig cfg;
    cfg.kind = DgpKind::ProbitDgp;
    cfg.n = 300;
    cfg.theta = VectorXd::Zero(3);
    cfg.theta << 0.5, 0.5, -0.5;
    cfg.seed = s.seed + 2;
    const auto sim = simulate_dgp(cfg);
    report("probit", make_probit(3), sim.data, [&] {
      VectorXd t(3);
      for (int j = 0; j < 3; ++j) t[j] = 0.5 * rng.normal();
      return t;
    });
  }
  {
    MatrixXd H(2, 2);
    H << 2.0, 0.3,
         0.3, 1.0;
    const QuadraticModel quad = make_quadratic(H, VectorXd::Zero(2));
    report("quadratic", quad.spec(), dummy_dataset(4), [&] {
      VectorXd t(2);
      for (int j = 0; j < 2; ++j) t[j] = rng.normal();
      return t;
    });
  }
  {
    DgpConfig cfg;
    cfg.kind = DgpKind::NonlinearPanel;
    cfg.n_units = 6;
    cfg.T = 8;
    cfg.theta = VectorXd::Constant(1, 1.0);
    cfg.seed = s.seed + 3;
    const auto sim = simulate_dgp(cfg);
    report("panel-variance", make_panel_variance_model(6), sim.data, [&] {
      VectorXd t(7);
      t[0] = 0.3 * rng.normal();
      for (int j = 1; j < 7; ++j) t[j] = 1.0 + 0.3 * rng.normal();
      return t;
    });
  }
  {
    // exponential-mean NLS: f(x; theta) = exp(x'theta)
    DgpConfig cfg;
    cfg.kind = DgpKind::LinearGaussian;
    cfg.n = 200;
    cfg.theta = VectorXd::Zero(2);
    cfg.theta << 0.2, 0.1;
    cfg.seed = s.seed + 4;
    const auto sim = simulate_dgp(cfg);
    NlsFunc f = [](const RowRef& x, const VectorXd& t) { return std::exp(x.dot(t)); };
    NlsGrad g = [](const RowRef& x, const VectorXd& t, VectorXd& out) {
      out = std::exp(x.dot(t)) * x.transpose();
    };
    report("nls-exp", make_nls(2, f, g), sim.data, [&] {
      VectorXd t(2);
      for (int j = 0; j < 2; ++j) t[j] = 0.2 * rng.normal();
      return t;
    });
  }
  if (!s.data_path.empty()) {
    LoadedProblem p = load_problem(s);
    const VectorXd base = resolve_theta0(s, p);
    report(s.model + " (user data)", p.model, p.data, [&] {
      VectorXd t = base;
      for (long j = 0; j < t.size(); ++j) t[j] += 0.1 * rng.normal();
      return t;
    });
  }
  return all_ok ? 0 : 3;
}

int cmd_saddle_demo(const Settings& s) {
  MatrixXd H = MatrixXd::Zero(2, 2);
  H(0, 0) = 1.0;
  H(1, 1) = -1.0;
  const QuadraticModel saddle = make_saddle(H, VectorXd::Zero(2));
  SaddleDemoConfig cfg;
  cfg.gamma = s.gamma;
  cfg.iterations = static_cast<int>(s.saddle_iterations);
  cfg.seeds = static_cast<int>(s.saddle_seeds);
  cfg.noise_sd = s.saddle_noise_sd;
  cfg.seed = s.seed;
  const auto table = saddle_demo(saddle, s.c_grid, cfg);

  std::printf("%6s | %10s %10s %12s | %10s %10s %12s %8s\n", "c", "nr_th1", "nr_th2",
              "nr_Q", "rnr_th1", "rnr_th2", "rnr_Q", "escape");
  for (const auto& row : table)
    std::printf("%6.2f | %10.2f %10.2f %12.2f | %10.2f %10.2f %12.2f %8.2f\n", row.c,
                row.nr_theta[0], row.nr_theta[1], row.nr_objective, row.rnr_theta[0],
                row.rnr_theta[1], row.rnr_objective, row.rnr_escape_fraction);

  if (!s.out_dir.empty()) {
    ensure_dir(s.out_dir);
    std::ofstream out(join_path(s.out_dir, "saddle.csv"));
    out << "c,nr_theta1,nr_theta2,nr_objective,rnr_theta1,rnr_theta2,rnr_objective,"
           "rnr_escape_fraction\n";
    for (const auto& row : table)
      out << fmt(row.c) << ',' << fmt(row.nr_theta[0]) << ',' << fmt(row.nr_theta[1]) << ','
          << fmt(row.nr_objective) << ',' << fmt(row.rnr_theta[0]) << ','
          << fmt(row.rnr_theta[1]) << ',' << fmt(row.rnr_objective) << ','
          << fmt(row.rnr_escape_fraction) << '\n';
  }
  return 0;
}

void register_common(CLI::App* app, Settings& s) {
  static std::string config_sink;
  app->add_option("--config", config_sink, "flat key-value JSON configuration (loaded first)");
  app->add_option("--data", s.data_path, "input CSV path");
  app->add_option("--model", s.model, "ols | probit");
  app->add_option("--outcome", s.outcome, "outcome column");
  app->add_option("--regressors", s.regressors, "regressor columns")->delimiter(',');
  app->add_flag("--intercept,!--no-intercept", s.intercept, "append a constant column");
  app->add_option("--cluster", s.cluster_col, "cluster column");
  app->add_option("--unit", s.unit_col, "panel unit column");
  app->add_option("--time", s.time_col, "panel time column");
  app->add_option("--gamma", s.gamma, "learning rate in (0,1]");
  app->add_option("--B", s.B, "retained draws");
  app->add_option("--burn", s.burn, "burn-in (-1 = rule of thumb)");
  app->add_option("--method", s.method, "rgd | rnr | rqn");
  app->add_option("--scheme", s.scheme, "m-out-of-n | gaussian | exponential | poisson | unit");
  app->add_option("--m", s.m, "resample size (rows, or clusters when cluster-aware)");
  app->add_flag("--cluster-aware", s.cluster_aware, "resample/reweight whole clusters");
  app->add_flag("--demean", s.demean, "de-mean multiplier weights");
  app->add_option("--seed", s.seed, "64-bit seed");
  app->add_option("--alpha", s.alpha, "1 - confidence level");
  app->add_option("--theta0", s.theta0, "starting values")->delimiter(',');
  app->add_flag("--nr-modify", s.nr_modify, "|eigenvalue| hessian modification for rNR");
  app->add_flag("--penalty.enabled", s.penalty_enabled, "quadratic penalty during burn-in");
  app->add_option("--penalty.lambda0", s.penalty_lambda0);
  app->add_option("--penalty.decay", s.penalty_decay);
  app->add_option("--penalty.duration", s.penalty_duration);
  app->add_option("--qn.L", s.qn_L, "secant window (0 = max(25, 1.5 d))");
  app->add_option("--qn.lambda_S", s.qn_lambda_S);
  app->add_option("--qn.lambda_min", s.qn_lambda_min);
  app->add_option("--qn.max_refresh", s.qn_max_refresh);
  app->add_option("--out", s.out_dir, "output directory");
  app->add_option("--threads", s.threads, "worker threads (0 = hardware)");
}

} // namespace

int run(int argc, const char* const* argv) {
  Settings s;

  // config file values load first; explicit flags then override them
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      std::ifstream in(argv[i + 1]);
      if (!in) {
        std::fprintf(stderr, "error: cannot open config %s\n", argv[i + 1]);
        return 2;
      }
      try {
        json j = json::parse(in);
        if (j.contains("config")) j = j.at("config"); // accept a report/diagnostics echo
        apply_json(j, s);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "error: bad config: %s\n", e.what());
        return 2;
      }
    }
  }

  CLI::App app{"resampled estimation and inference toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "flat key-value JSON configuration");

  CLI::App* fit = app.add_subcommand("fit", "run one chain and report estimates");
  CLI::App* mc = app.add_subcommand("mc", "Monte Carlo study over a synthetic DGP");
  CLI::App* compare = app.add_subcommand("compare", "side-by-side method comparison");
  CLI::App* check = app.add_subcommand("check", "gradient checks for the built-in models");
  CLI::App* saddle = app.add_subcommand("saddle-demo", "behaviour table around a saddle point");
  for (CLI::App* cmd : {fit, mc, compare, check, saddle}) register_common(cmd, s);

  mc->add_option("--dgp", s.dgp, "linear-gaussian | probit | nonlinear-panel");
  mc->add_option("--n", s.n, "observations per replication");
  mc->add_option("--n-units", s.n_units, "panel units");
  mc->add_option("--T", s.T, "panel periods");
  mc->add_option("--theta-true", s.theta_true, "true coefficients")->delimiter(',');
  mc->add_option("--replications", s.replications);

  compare->add_option("--methods", s.methods,
                      "subset of rnr,rqn,rgd,boot,dmk,ks,mala,sgd")->delimiter(',');
  compare->add_option("--dmk.k", s.dmk_k, "NR steps per DMK replication");
  compare->add_option("--mala.gamma", s.mala_gamma, "0 = heuristic -2 log(0.57)/d");
  compare->add_flag("--mala.tune,!--mala.no-tune", s.mala_tune);
  compare->add_option("--sgd.gamma0", s.sgd_gamma0);
  compare->add_option("--sgd.delta", s.sgd_delta);
  compare->add_option("--sgd.m", s.sgd_m);
  compare->add_option("--sgd.iters", s.sgd_iters);

  saddle->add_option("--c-grid", s.c_grid, "starting offsets along q2")->delimiter(',');
  saddle->add_option("--iterations", s.saddle_iterations);
  saddle->add_option("--seeds", s.saddle_seeds);
  saddle->add_option("--noise-sd", s.saddle_noise_sd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto run_command = [&]() -> int {
    if (fit->parsed()) { s.command = "fit"; return cmd_fit(s); }
    if (mc->parsed()) { s.command = "mc"; return cmd_mc(s); }
    if (compare->parsed()) { s.command = "compare"; return cmd_compare(s); }
    if (check->parsed()) { s.command = "check"; return cmd_check(s); }
    if (saddle->parsed()) { s.command = "saddle-demo"; return cmd_saddle_demo(s); }
    return 2;
  };

  try {
    return run_command();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    if (!s.out_dir.empty()) {
      try {
        ensure_dir(s.out_dir);
        write_json(join_path(s.out_dir, "diagnostics.json"),
                   {{"config", settings_to_json(s)},
                    {"error", {{"category", "config"}, {"message", e.what()}}}});
      } catch (...) {}
    }
    return 2;
  } catch (const std::exception& e) {
    std::string category = "numerical";
    if (dynamic_cast<const SingularityError*>(&e)) category = "singularity";
    else if (dynamic_cast<const DivergenceError*>(&e)) category = "divergence";
    else if (dynamic_cast<const ConditioningError*>(&e)) category = "conditioning";
    else if (dynamic_cast<const InsufficientDrawsError*>(&e)) category = "insufficient-draws";
    else if (dynamic_cast<const PlanMismatchError*>(&e)) category = "plan-mismatch";
    std::fprintf(stderr, "%s error: %s\n", category.c_str(), e.what());
    if (!s.out_dir.empty()) {
      try {
        ensure_dir(s.out_dir);
        write_json(join_path(s.out_dir, "diagnostics.json"),
                   {{"config", settings_to_json(s)},
                    {"error", {{"category", category}, {"message", e.what()}}}});
      } catch (...) {}
    }
    return 3;
  }
}

} // namespace rei::cli
