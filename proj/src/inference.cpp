#include "rei/inference.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace rei {

double phi(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("phi: gamma must be in (0,1]");
  return gamma / (2.0 - gamma);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ConfigError("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const long lo = static_cast<long>(std::floor(pos));
  const long hi = static_cast<long>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return (1.0 - frac) * values[lo] + frac * values[hi];
}

namespace {

double lag_autocorr(const VectorXd& x, long lag) {
  const long B = x.size();
  const double mean = x.mean();
  double denom = 0.0, numer = 0.0;
  for (long b = 0; b < B; ++b) denom += (x[b] - mean) * (x[b] - mean);
  for (long b = lag; b < B; ++b) numer += (x[b] - mean) * (x[b - lag] - mean);
  return denom > 0.0 ? numer / denom : 0.0;
}

CoefficientSummary summarize_values(const VectorXd& h_values, double adjustment,
                                    double alpha) {
  const long B = h_values.size();
  CoefficientSummary s;
  s.estimate = h_values.mean();
  double ss = 0.0;
  for (long b = 0; b < B; ++b) ss += (h_values[b] - s.estimate) * (h_values[b] - s.estimate);
  s.se = adjustment * std::sqrt(ss / static_cast<double>(B)); // 1/B, as the update rule uses

  // adjusted draws h~_b = hbar + adjustment (h_b - hbar); CI from quantiles of
  // the centered values, anchored at the estimate (percentile reading)
  std::vector<double> centered(B);
  double tilde_mean = 0.0;
  for (long b = 0; b < B; ++b) tilde_mean += s.estimate + adjustment * (h_values[b] - s.estimate);
  tilde_mean /= static_cast<double>(B);
  for (long b = 0; b < B; ++b)
    centered[b] = (s.estimate + adjustment * (h_values[b] - s.estimate)) - tilde_mean;
  s.ci_lo = s.estimate + quantile(centered, alpha / 2.0);
  s.ci_hi = s.estimate + quantile(std::move(centered), 1.0 - alpha / 2.0);
  s.autocorr1 = lag_autocorr(h_values, 1);
  return s;
}

} // namespace

InferenceReport summarize(const DrawChain& chain, double alpha, long n) {
  const long B = chain.B();
  if (B < 10) throw InsufficientDrawsError("summarize: need at least 10 retained draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("summarize: alpha must be in (0,1)");

  InferenceReport rep;
  rep.alpha = alpha;
  rep.B = B;
  rep.n = n;
  rep.effective_m = chain.effective_m;
  rep.gamma = chain.config.gamma;
  rep.phi_gamma = phi(chain.config.gamma);
  rep.adjustment = std::sqrt(static_cast<double>(chain.effective_m) /
                             (static_cast<double>(n) * rep.phi_gamma));
  rep.estimate = chain.draws.colwise().mean().transpose();
  rep.coefficients.reserve(chain.draws.cols());
  for (long j = 0; j < chain.draws.cols(); ++j)
    rep.coefficients.push_back(summarize_values(chain.draws.col(j), rep.adjustment, alpha));
  return rep;
}

CoefficientSummary summarize_function(const DrawChain& chain, const ScalarFunction& h,
                                      double alpha, long n) {
  const long B = chain.B();
  if (B < 10) throw InsufficientDrawsError("summarize: need at least 10 retained draws");
  const double adjustment = std::sqrt(static_cast<double>(chain.effective_m) /
                                      (static_cast<double>(n) * phi(chain.config.gamma)));

  // anchor at h(theta_bar): deviations and interval endpoints are measured
  // around h of the mean draw, not the mean of the h values
  const VectorXd theta_bar = chain.draws.colwise().mean().transpose();
  CoefficientSummary s;
  s.estimate = h(theta_bar);

  VectorXd h_raw(B), h_tilde(B);
  for (long b = 0; b < B; ++b) {
    const VectorXd theta_b = chain.draws.row(b).transpose();
    h_raw[b] = h(theta_b);
    h_tilde[b] = h(theta_bar + adjustment * (theta_b - theta_bar));
  }
  double ss = 0.0;
  for (long b = 0; b < B; ++b) ss += (h_raw[b] - s.estimate) * (h_raw[b] - s.estimate);
  s.se = adjustment * std::sqrt(ss / static_cast<double>(B));

  std::vector<double> centered(B);
  const double tilde_mean = h_tilde.mean();
  for (long b = 0; b < B; ++b) centered[b] = h_tilde[b] - tilde_mean;
  s.ci_lo = s.estimate + quantile(centered, alpha / 2.0);
  s.ci_hi = s.estimate + quantile(std::move(centered), 1.0 - alpha / 2.0);
  s.autocorr1 = lag_autocorr(h_raw, 1);
  return s;
}

VectorXd autocorrelation(const DrawChain& chain, long lag) {
  if (chain.B() <= lag) throw ConfigError("autocorrelation: B must exceed the lag");
  VectorXd out(chain.draws.cols());
  for (long j = 0; j < chain.draws.cols(); ++j)
    out[j] = lag_autocorr(chain.draws.col(j), lag);
  return out;
}

SandwichEstimate sandwich(const ModelSpec& model, const Dataset& data,
                          const VectorXd& theta_hat, bool cluster) {
  if (cluster && !data.cluster_ids)
    throw ConfigError("sandwich: clustered meat requires cluster_ids");
  const long n = data.n();
  const int d = model.d_theta;
  const ResamplePlan plan = unit_plan(n);

  EvalRequest want;
  want.value = false;
  want.hessian = true;
  const MatrixXd H = *evaluate(model, data, theta_hat, plan, want).hessian;
  Eigen::LDLT<MatrixXd> ldlt(H);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw SingularityError("sandwich: singular hessian; consider a ridge");

  SandwichEstimate out;
  out.clustered = cluster;
  out.bread = ldlt.solve(MatrixXd::Identity(d, d));
  out.bread = 0.5 * (out.bread + out.bread.transpose());

  out.meat = MatrixXd::Zero(d, d);
  VectorXd g(d);
  if (!cluster) {
    for (long i = 0; i < n; ++i) {
      model.gradient(data.rows.row(i), theta_hat, g);
      out.meat.noalias() += g * g.transpose();
    }
  } else {
    const int n_clusters = data.cluster_count();
    MatrixXd sums = MatrixXd::Zero(n_clusters, d);
    for (long i = 0; i < n; ++i) {
      model.gradient(data.rows.row(i), theta_hat, g);
      sums.row((*data.cluster_ids)[i]) += g.transpose();
    }
    for (int c = 0; c < n_clusters; ++c)
      out.meat.noalias() += sums.row(c).transpose() * sums.row(c);
  }
  out.meat /= static_cast<double>(n);
  out.V = out.bread * out.meat * out.bread;
  out.V = 0.5 * (out.V + out.V.transpose());
  return out;
}

double delta_method_se(const VectorXd& grad_h, const SandwichEstimate& V, long n) {
  return std::sqrt(grad_h.dot(V.V * grad_h) / static_cast<double>(n));
}

} // namespace rei
