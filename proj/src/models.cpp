#include "rei/models.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "rei/csv.hpp"
#include "rei/rng.hpp"

namespace rei {

namespace {
constexpr double kLogSqrt2Pi = 0.9189385332046727417803297; // log(sqrt(2*pi))
constexpr double kTailCut = 8.0;

double log_norm_pdf(double s) { return -0.5 * s * s - kLogSqrt2Pi; }

// Mills-ratio asymptotic series 1 - 1/s^2 + 3/s^4 - 15/s^6 + ... at s -> -inf,
// summed adaptively until terms stop shrinking. At |s| = 8 this reaches
// ~1e-16, so the two log-Phi branches agree at the switch point.
double tail_series(double s) {
  const double r = 1.0 / (s * s);
  double term = 1.0, sum = 1.0;
  for (int k = 0; k < 40; ++k) {
    const double next = term * (-(2.0 * k + 1.0) * r);
    if (std::abs(next) >= std::abs(term)) break; // series turned divergent
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sum;
}
} // namespace

double log_norm_cdf(double s) {
  if (s > -kTailCut) {
    return std::log(0.5 * std::erfc(-s / std::sqrt(2.0)));
  }
  // Phi(s) = phi(s)/(-s) * series, s << 0
  return log_norm_pdf(s) - std::log(-s) + std::log(tail_series(s));
}

double inverse_mills(double s) {
  if (s > -kTailCut) {
    return std::exp(log_norm_pdf(s) - log_norm_cdf(s));
  }
  return -s / tail_series(s);
}

ModelSpec make_ols(int d_theta) {
  ModelSpec m;
  m.d_theta = d_theta;
  m.name = "ols";
  m.loss = [](const RowRef& row, const VectorXd& theta) {
    const double r = row[0] - row.tail(theta.size()).dot(theta);
    return 0.5 * r * r;
  };
  m.gradient = [](const RowRef& row, const VectorXd& theta, VectorXd& out) {
    const auto x = row.tail(theta.size());
    const double r = row[0] - x.dot(theta);
    out = -r * x.transpose();
  };
  m.hessian = [](const RowRef& row, const VectorXd& theta, MatrixXd& out) {
    const auto x = row.tail(theta.size());
    out = x.transpose() * x;
  };
  return m;
}

ModelSpec make_probit(int d_theta) {
  ModelSpec m;
  m.d_theta = d_theta;
  m.name = "probit";
  m.loss = [](const RowRef& row, const VectorXd& theta) {
    const double s = row.tail(theta.size()).dot(theta);
    const double y = row[0];
    return -(y * log_norm_cdf(s) + (1.0 - y) * log_norm_cdf(-s));
  };
  m.gradient = [](const RowRef& row, const VectorXd& theta, VectorXd& out) {
    const auto x = row.tail(theta.size());
    const double s = x.dot(theta);
    const double y = row[0];
    const double ds = -(y * inverse_mills(s) - (1.0 - y) * inverse_mills(-s));
    out = ds * x.transpose();
  };
  m.hessian = [](const RowRef& row, const VectorXd& theta, MatrixXd& out) {
    const auto x = row.tail(theta.size());
    const double s = x.dot(theta);
    const double y = row[0];
    // d^2/ds^2 of the per-row loss; nonnegative for both outcomes
    double w;
    if (y > 0.5) {
      const double l = inverse_mills(s);
      w = l * (s + l);
    } else {
      const double l = inverse_mills(-s);
      w = l * (l - s);
    }
    out = w * (x.transpose() * x);
  };
  return m;
}

ModelSpec make_nls(int d_theta, NlsFunc f, NlsGrad grad_f, bool gauss_newton_hessian) {
  ModelSpec m;
  m.d_theta = d_theta;
  m.name = "nls";
  m.loss = [f](const RowRef& row, const VectorXd& theta) {
    const double r = row[0] - f(row.tail(row.size() - 1), theta);
    return r * r;
  };
  m.gradient = [f, grad_f](const RowRef& row, const VectorXd& theta, VectorXd& out) {
    const auto x = row.tail(row.size() - 1);
    const double r = row[0] - f(x, theta);
    grad_f(x, theta, out);
    out *= -2.0 * r;
  };
  if (gauss_newton_hessian) {
    m.hessian = [grad_f](const RowRef& row, const VectorXd& theta, MatrixXd& out) {
      VectorXd g(theta.size());
      grad_f(row.tail(row.size() - 1), theta, g);
      out = 2.0 * (g * g.transpose());
    };
  }
  return m;
}

QuadraticModel make_quadratic(MatrixXd H, VectorXd center) {
  QuadraticModel q;
  q.H = 0.5 * (H + H.transpose());
  q.center = std::move(center);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(q.H);
  const long d = q.H.rows();
  q.eigenvalues.resize(d);
  q.eigenvectors.resize(d, d);
  for (long j = 0; j < d; ++j) { // Eigen sorts ascending; flip to descending
    q.eigenvalues[j] = es.eigenvalues()[d - 1 - j];
    q.eigenvectors.col(j) = es.eigenvectors().col(d - 1 - j);
  }
  q.positive_count = static_cast<int>((q.eigenvalues.array() > 0.0).count());
  return q;
}

QuadraticModel make_saddle(MatrixXd H, VectorXd center) {
  QuadraticModel q = make_quadratic(std::move(H), std::move(center));
  const long d = q.eigenvalues.size();
  if (q.positive_count < 1 || q.positive_count >= d)
    throw ConfigError("make_saddle: hessian must be indefinite");
  return q;
}

ModelSpec QuadraticModel::spec() const {
  ModelSpec m;
  m.d_theta = static_cast<int>(H.rows());
  m.name = "quadratic";
  const MatrixXd Hm = H;
  const VectorXd c = center;
  m.loss = [Hm, c](const RowRef&, const VectorXd& theta) {
    VectorXd d = theta - c;
    return 0.5 * d.dot(Hm * d);
  };
  m.gradient = [Hm, c](const RowRef&, const VectorXd& theta, VectorXd& out) {
    out.noalias() = Hm * (theta - c);
  };
  m.hessian = [Hm](const RowRef&, const VectorXd&, MatrixXd& out) { out = Hm; };
  return m;
}

Dataset dummy_dataset(long n, long width) {
  Dataset d;
  d.rows = MatrixXd::Zero(n, width);
  return d;
}

std::vector<SaddleDemoRow> saddle_demo(const QuadraticModel& model,
                                       const std::vector<double>& c_grid,
                                       const SaddleDemoConfig& config) {
  const long d = model.H.rows();
  const VectorXd q1 = model.eigenvectors.col(0);
  const VectorXd q2 = model.eigenvectors.col(model.positive_count); // leading negative curvature

  // modified conditioner (H^2)^{-1/2} = Q |Lambda|^{-1} Q'
  MatrixXd P = MatrixXd::Zero(d, d);
  for (long j = 0; j < d; ++j)
    P += (1.0 / std::abs(model.eigenvalues[j])) *
         (model.eigenvectors.col(j) * model.eigenvectors.col(j).transpose());

  std::vector<SaddleDemoRow> table;
  for (double c : c_grid) {
    SaddleDemoRow row;
    row.c = c;
    const VectorXd theta0 = model.center + q1 + c * q2;

    VectorXd theta = theta0;
    for (int b = 0; b < config.iterations; ++b)
      theta -= config.gamma * (P * (model.H * (theta - model.center)));
    row.nr_theta = theta;
    row.nr_objective = model.objective(theta);

    int escaped = 0;
    for (int s = 0; s < config.seeds; ++s) {
      RngStream rng(config.seed + static_cast<std::uint64_t>(s),
                    static_cast<std::uint64_t>(std::llround(c * 1e6)),
                    StreamPurpose::Plan);
      VectorXd th = theta0;
      for (int b = 0; b < config.iterations; ++b) {
        VectorXd noise(d);
        for (long j = 0; j < d; ++j) noise[j] = config.noise_sd * rng.normal();
        th -= config.gamma * (P * (model.H * (th - model.center) + noise));
      }
      if (std::abs(q2.dot(th - model.center)) > 10.0) ++escaped;
      if (s == 0) {
        row.rnr_theta = th;
        row.rnr_objective = model.objective(th);
      }
    }
    row.rnr_escape_fraction = static_cast<double>(escaped) / config.seeds;
    table.push_back(std::move(row));
  }
  return table;
}

ModelSpec wrap_penalty(const ModelSpec& inner, std::shared_ptr<PenaltySchedule> schedule,
                       VectorXd anchor, long n) {
  if (schedule->lambda < 0.0) throw ConfigError("wrap_penalty: lambda must be >= 0");
  ModelSpec m = inner;
  m.name = inner.name + "+penalty";
  const double inv_n = 1.0 / static_cast<double>(n);
  const VectorXd a = std::move(anchor);
  m.loss = [inner, schedule, a, inv_n](const RowRef& row, const VectorXd& theta) {
    const double pen = 0.5 * schedule->lambda * inv_n * (theta - a).squaredNorm();
    return inner.loss(row, theta) + pen;
  };
  m.gradient = [inner, schedule, a, inv_n](const RowRef& row, const VectorXd& theta,
                                           VectorXd& out) {
    inner.gradient(row, theta, out);
    out.noalias() += (schedule->lambda * inv_n) * (theta - a);
  };
  if (inner.has_hessian()) {
    m.hessian = [inner, schedule, inv_n](const RowRef& row, const VectorXd& theta,
                                         MatrixXd& out) {
      inner.hessian(row, theta, out);
      out.diagonal().array() += schedule->lambda * inv_n;
    };
  }
  return m;
}

SimulatedData simulate_dgp(const DgpConfig& config) {
  RngStream rng(config.seed, 0, StreamPurpose::Dgp);
  SimulatedData out;

  if (config.kind == DgpKind::LinearGaussian || config.kind == DgpKind::ProbitDgp) {
    if (config.n < 1 || config.theta.size() < 1)
      throw ConfigError("simulate_dgp: need n >= 1 and a theta");
    const long n = config.n;
    const int d = static_cast<int>(config.theta.size());
    MatrixXd rows(n, d + 1);
    for (long i = 0; i < n; ++i) {
      rows(i, 1) = 1.0; // intercept
      for (int j = 2; j <= d; ++j) rows(i, j) = rng.normal();
      const double xb = rows.row(i).tail(d).dot(config.theta);
      const double eps = rng.normal();
      rows(i, 0) = config.kind == DgpKind::LinearGaussian
                       ? xb + eps
                       : (xb + eps > 0.0 ? 1.0 : 0.0);
    }
    out.data.rows = std::move(rows);
    out.theta_true = config.theta;
    return out;
  }

  // NonlinearPanel: y_it = a_i + sqrt(v) eps_it with unit effects a_i; the
  // pooled-variance MLE of v carries an exact -v/T bias at fixed T.
  if (config.n_units < 2 || config.T < 2)
    throw ConfigError("simulate_dgp: panel needs n_units >= 2 and T >= 2");
  const int U = config.n_units, T = config.T;
  const double v = config.theta.size() > 0 ? config.theta[0] : 1.0;
  if (v <= 0.0) throw ConfigError("simulate_dgp: panel variance must be > 0");

  VectorXd alpha(U);
  for (int i = 0; i < U; ++i) alpha[i] = 1.0 + rng.normal();

  const long n = static_cast<long>(U) * T;
  MatrixXd rows(n, 3);
  std::vector<int> cluster(n), unit(n), time(n);
  long r = 0;
  for (int i = 0; i < U; ++i)
    for (int t = 0; t < T; ++t, ++r) {
      rows(r, 0) = alpha[i] + std::sqrt(v) * rng.normal();
      rows(r, 1) = i;
      rows(r, 2) = t;
      cluster[r] = i;
      unit[r] = i;
      time[r] = t;
    }
  out.data.rows = std::move(rows);
  out.data.cluster_ids = std::move(cluster);
  out.data.unit_ids = std::move(unit);
  out.data.time_ids = std::move(time);
  out.data.panel = PanelShape{U, T};
  out.theta_true.resize(1 + U);
  out.theta_true[0] = v;
  out.theta_true.tail(U) = alpha;
  return out;
}

ModelSpec make_panel_variance_model(int n_units) {
  // log-variance parameterization keeps the chain inside the domain
  ModelSpec m;
  m.d_theta = 1 + n_units;
  m.name = "panel-variance";
  m.loss = [](const RowRef& row, const VectorXd& theta) {
    const double u = theta[0]; // log v
    const double r = row[0] - theta[1 + static_cast<int>(row[1])];
    return 0.5 * u + 0.5 * r * r * std::exp(-u);
  };
  m.gradient = [](const RowRef& row, const VectorXd& theta, VectorXd& out) {
    const double inv_v = std::exp(-theta[0]);
    const int unit = static_cast<int>(row[1]);
    const double r = row[0] - theta[1 + unit];
    out.setZero();
    out[0] = 0.5 - 0.5 * r * r * inv_v;
    out[1 + unit] = -r * inv_v;
  };
  m.hessian = [](const RowRef& row, const VectorXd& theta, MatrixXd& out) {
    const double inv_v = std::exp(-theta[0]);
    const int unit = static_cast<int>(row[1]);
    const double r = row[0] - theta[1 + unit];
    out.setZero();
    out(0, 0) = 0.5 * r * r * inv_v;
    out(0, 1 + unit) = r * inv_v;
    out(1 + unit, 0) = out(0, 1 + unit);
    out(1 + unit, 1 + unit) = inv_v;
  };
  return m;
}

VectorXd probit_start_from_lpm(const Dataset& data) {
  const long n = data.n();
  const int d = static_cast<int>(data.width() - 1);
  MatrixXd X = data.rows.rightCols(d);
  VectorXd y = data.rows.col(0);
  VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  const double phi0 = std::exp(-kLogSqrt2Pi); // 1/sqrt(2*pi)
  // find the intercept column (all ones), if any
  int intercept = -1;
  for (int j = 0; j < d; ++j)
    if ((X.col(j).array() == 1.0).all()) { intercept = j; break; }
  VectorXd theta0 = beta / phi0;
  if (intercept >= 0) theta0[intercept] = (beta[intercept] - 0.5) / phi0;
  return theta0;
}

Dataset load_mroz(const std::string& csv_path) {
  CsvTable t = read_csv(csv_path);
  const char* needed[] = {"inlf", "nwifeinc", "educ", "exper", "age", "kidslt6", "kidsge6"};
  std::vector<int> col;
  for (const char* name : needed) col.push_back(t.column_index(name));

  const long n = t.values.rows();
  MatrixXd rows(n, 9);
  for (long i = 0; i < n; ++i) {
    rows(i, 0) = t.values(i, col[0]);                  // inlf
    rows(i, 1) = t.values(i, col[1]);                  // nwifeinc
    rows(i, 2) = t.values(i, col[2]);                  // educ
    rows(i, 3) = t.values(i, col[3]);                  // exper
    rows(i, 4) = rows(i, 3) * rows(i, 3);              // exper^2
    rows(i, 5) = t.values(i, col[4]);                  // age
    rows(i, 6) = t.values(i, col[5]);                  // kidslt6
    rows(i, 7) = t.values(i, col[6]);                  // kidsge6
    rows(i, 8) = 1.0;                                  // constant
  }
  Dataset d;
  d.rows = std::move(rows);
  return d;
}

} // namespace rei
