#include <doctest.h>

#include <Eigen/Dense>

#include "rei/inference.hpp"
#include "rei/models.hpp"

using namespace rei;

namespace {

DrawChain chain_from(const MatrixXd& draws, double gamma, long effective_m) {
  DrawChain c;
  c.draws = draws;
  c.burned.resize(0, draws.cols());
  c.config.gamma = gamma;
  c.config.theta0 = VectorXd::Zero(draws.cols());
  c.effective_m = effective_m;
  return c;
}

} // namespace

TEST_CASE("phi table from the footnote, exact") {
  CHECK(std::abs(1.0 / phi(1.0) - 1.0) < 1e-12);
  CHECK(std::abs(1.0 / phi(0.4) - 4.0) < 1e-12);
  CHECK(std::abs(1.0 / phi(0.2) - 9.0) < 1e-12);
  CHECK(std::abs(1.0 / phi(0.1) - 19.0) < 1e-12);
  CHECK(std::abs(1.0 / phi(0.01) - 199.0) < 1e-12);
  CHECK(phi(0.5) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK_THROWS_AS(phi(0.0), ConfigError);
  CHECK_THROWS_AS(phi(1.5), ConfigError);
}

TEST_CASE("constant chain: zero se, point ci") {
  MatrixXd draws = MatrixXd::Constant(50, 2, 3.25);
  const auto rep = summarize(chain_from(draws, 0.3, 100), 0.05, 100);
  for (const auto& c : rep.coefficients) {
    CHECK(c.estimate == doctest::Approx(3.25));
    CHECK(c.se == 0.0);
    CHECK(c.ci_lo == doctest::Approx(3.25));
    CHECK(c.ci_hi == doctest::Approx(3.25));
  }
}

TEST_CASE("gamma = 1, m = n: adjustment is 1 and se is the plain sd") {
  RngStream rng(7, 0, StreamPurpose::Dgp);
  MatrixXd draws(500, 1);
  for (long b = 0; b < 500; ++b) draws(b, 0) = rng.normal();
  const auto rep = summarize(chain_from(draws, 1.0, 200), 0.05, 200);
  CHECK(rep.adjustment == doctest::Approx(1.0).epsilon(1e-14));
  const double mean = draws.col(0).mean();
  const double sd = std::sqrt((draws.col(0).array() - mean).square().sum() / 500.0);
  CHECK(rep.coefficients[0].se == doctest::Approx(sd).epsilon(1e-12));
}

TEST_CASE("scale equivariance of se and ci width") {
  RngStream rng(9, 0, StreamPurpose::Dgp);
  MatrixXd draws(300, 1);
  for (long b = 0; b < 300; ++b) draws(b, 0) = 2.0 + rng.normal();
  const double c = -3.0;
  const auto rep1 = summarize(chain_from(draws, 0.2, 50), 0.1, 500);
  const auto rep2 = summarize(chain_from(c * draws, 0.2, 50), 0.1, 500);
  CHECK(rep2.coefficients[0].se ==
        doctest::Approx(std::abs(c) * rep1.coefficients[0].se).epsilon(1e-12));
  const double w1 = rep1.coefficients[0].ci_hi - rep1.coefficients[0].ci_lo;
  const double w2 = rep2.coefficients[0].ci_hi - rep2.coefficients[0].ci_lo;
  CHECK(w2 == doctest::Approx(std::abs(c) * w1).epsilon(1e-12));
}

TEST_CASE("ci always contains the estimate when centered quantiles straddle zero") {
  RngStream rng(11, 0, StreamPurpose::Dgp);
  MatrixXd draws(200, 1);
  for (long b = 0; b < 200; ++b) draws(b, 0) = rng.normal() - 0.5;
  const auto rep = summarize(chain_from(draws, 0.4, 80), 0.05, 120);
  CHECK(rep.coefficients[0].ci_lo <= rep.coefficients[0].estimate);
  CHECK(rep.coefficients[0].ci_hi >= rep.coefficients[0].estimate);
}

TEST_CASE("insufficient draws is its own error") {
  MatrixXd draws = MatrixXd::Zero(5, 1);
  CHECK_THROWS_AS(summarize(chain_from(draws, 0.3, 10), 0.05, 10), InsufficientDrawsError);
}

TEST_CASE("quantile: linear interpolation between order statistics") {
  std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  CHECK(quantile(v, 0.0) == doctest::Approx(1.0));
  CHECK(quantile(v, 1.0) == doctest::Approx(4.0));
  CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK(quantile(v, 1.0 / 3.0) == doctest::Approx(2.0));
}

TEST_CASE("delta method: coordinate, sum, product") {
  SandwichEstimate V;
  V.V = MatrixXd::Identity(2, 2);
  VectorXd e1(2), sum(2), prod(2);
  e1 << 1.0, 0.0;
  sum << 1.0, 1.0;
  prod << 3.0, 2.0; // grad of t1*t2 at (2,3)
  CHECK(delta_method_se(e1, V, 100) == doctest::Approx(0.1).epsilon(1e-12));
  V.V << 1.0, 0.25,
         0.25, 1.0;
  CHECK(delta_method_se(sum, V, 100) ==
        doctest::Approx(std::sqrt((1.0 + 0.5 + 1.0) / 100.0)).epsilon(1e-12));
  V.V = MatrixXd::Identity(2, 2);
  CHECK(delta_method_se(prod, V, 100) == doctest::Approx(0.360555127546).epsilon(1e-9));
}

TEST_CASE("sandwich matches the homoskedastic ols closed form across seeds") {
  const ModelSpec ols = make_ols(3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DgpConfig cfg;
    cfg.kind = DgpKind::LinearGaussian;
    cfg.n = 4000;
    cfg.theta = VectorXd::Zero(3);
    cfg.theta << 1.0, 0.5, -0.5;
    cfg.seed = 200 + seed;
    const auto sim = simulate_dgp(cfg);
    const MatrixXd X = sim.data.rows.rightCols(3);
    const VectorXd y = sim.data.rows.col(0);
    const VectorXd theta_hat = (X.transpose() * X).ldlt().solve(X.transpose() * y);

    const auto sw = sandwich(ols, sim.data, theta_hat, false);
    const VectorXd resid = y - X * theta_hat;
    const double s2 = resid.squaredNorm() / static_cast<double>(cfg.n);
    const MatrixXd textbook = s2 * (X.transpose() * X / cfg.n).inverse();
    for (int j = 0; j < 3; ++j) {
      const double se_sw = std::sqrt(sw.V(j, j) / cfg.n);
      const double se_tb = std::sqrt(textbook(j, j) / cfg.n);
      CHECK(se_sw == doctest::Approx(se_tb).epsilon(0.10));
    }
  }
}

TEST_CASE("one observation per cluster: clustered meat equals the iid meat") {
  DgpConfig cfg;
  cfg.kind = DgpKind::LinearGaussian;
  cfg.n = 150;
  cfg.theta = VectorXd::Zero(2);
  cfg.theta << 0.3, 0.6;
  cfg.seed = 300;
  auto sim = simulate_dgp(cfg);
  std::vector<int> ids(cfg.n);
  for (long i = 0; i < cfg.n; ++i) ids[i] = static_cast<int>(i);
  sim.data.cluster_ids = ids;

  const ModelSpec ols = make_ols(2);
  const MatrixXd X = sim.data.rows.rightCols(2);
  const VectorXd theta_hat =
      (X.transpose() * X).ldlt().solve(X.transpose() * sim.data.rows.col(0));
  const auto iid = sandwich(ols, sim.data, theta_hat, false);
  const auto clustered = sandwich(ols, sim.data, theta_hat, true);
  CHECK((iid.meat - clustered.meat).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("autocorrelation: white noise, exact ar(1), and the rNR chain") {
  RngStream rng(13, 0, StreamPurpose::Dgp);
  const long B = 10000;
  MatrixXd iid(B, 1), ar(B, 1);
  double x = 0.0;
  for (long b = 0; b < B; ++b) {
    iid(b, 0) = rng.normal();
    x = 0.9 * x + rng.normal();
    ar(b, 0) = x;
  }
  CHECK(std::abs(autocorrelation(chain_from(iid, 0.5, 1), 1)[0]) < 2.0 / std::sqrt(B));
  CHECK(autocorrelation(chain_from(ar, 0.5, 1), 1)[0] == doctest::Approx(0.9).epsilon(0.025));

  DgpConfig cfg;
  cfg.kind = DgpKind::LinearGaussian;
  cfg.n = 300;
  cfg.theta = VectorXd::Zero(2);
  cfg.theta << 1.0, -1.0;
  cfg.seed = 400;
  const auto sim = simulate_dgp(cfg);
  RunConfig rc;
  rc.method = Method::RNR;
  rc.gamma = 0.25;
  rc.B = 4000;
  rc.burn = 50;
  rc.theta0 = VectorXd::Zero(2);
  rc.seed = 401;
  rc.scheme.scheme = Scheme::MOutOfN;
  rc.scheme.m = 300;
  const DrawChain chain = run_chain(make_ols(2), sim.data, rc);
  const VectorXd rho = autocorrelation(chain, 1);
  for (long j = 0; j < 2; ++j) CHECK(rho[j] == doctest::Approx(1.0 - rc.gamma).epsilon(0.07));
}

TEST_CASE("variance consistency: adjusted chain variance tracks the sandwich") {
  DgpConfig cfg;
  cfg.kind = DgpKind::LinearGaussian;
  cfg.n = 300;
  cfg.theta = VectorXd::Zero(2);
  cfg.theta << 1.0, 0.5;
  cfg.seed = 500;
  const auto sim = simulate_dgp(cfg);
  const ModelSpec ols = make_ols(2);
  const MatrixXd X = sim.data.rows.rightCols(2);
  const VectorXd theta_hat =
      (X.transpose() * X).ldlt().solve(X.transpose() * sim.data.rows.col(0));

  RunConfig rc;
  rc.method = Method::RNR;
  rc.gamma = 0.1;
  rc.B = 5000;
  rc.theta0 = theta_hat;
  rc.seed = 501;
  rc.scheme.scheme = Scheme::GaussianWeights;
  const DrawChain chain = run_chain(ols, sim.data, rc);
  const auto sw = sandwich(ols, sim.data, theta_hat, false);

  const double factor = static_cast<double>(chain.effective_m) /
                        (static_cast<double>(cfg.n) * phi(rc.gamma));
  for (int j = 0; j < 2; ++j) {
    const double mean = chain.draws.col(j).mean();
    const double var = (chain.draws.col(j).array() - mean).square().sum() / rc.B;
    const double target = sw.V(j, j) / static_cast<double>(cfg.n);
    CHECK(factor * var == doctest::Approx(target).epsilon(0.15));
  }
}

TEST_CASE("summarizing a function of theta anchors at h of the mean draw") {
  // near-gaussian chain: the function-level se should track the delta method
  DgpConfig cfg;
  cfg.kind = DgpKind::LinearGaussian;
  cfg.n = 400;
  cfg.theta = VectorXd::Zero(2);
  cfg.theta << 2.0, 1.0;
  cfg.seed = 600;
  const auto sim = simulate_dgp(cfg);
  const ModelSpec ols = make_ols(2);
  const MatrixXd X = sim.data.rows.rightCols(2);
  const VectorXd theta_hat =
      (X.transpose() * X).ldlt().solve(X.transpose() * sim.data.rows.col(0));

  RunConfig rc;
  rc.method = Method::RNR;
  rc.gamma = 0.2;
  rc.B = 4000;
  rc.theta0 = theta_hat;
  rc.seed = 601;
  rc.scheme.scheme = Scheme::GaussianWeights;
  const DrawChain chain = run_chain(ols, sim.data, rc);

  const ScalarFunction product = [](const VectorXd& t) { return t[0] * t[1]; };
  const auto summary = summarize_function(chain, product, 0.05, cfg.n);
  const VectorXd mean = chain.draws.colwise().mean().transpose();
  CHECK(summary.estimate == doctest::Approx(mean[0] * mean[1]).epsilon(1e-12));
  CHECK(summary.ci_lo <= summary.estimate);
  CHECK(summary.ci_hi >= summary.estimate);

  const auto sw = sandwich(ols, sim.data, theta_hat, false);
  VectorXd grad_h(2);
  grad_h << theta_hat[1], theta_hat[0];
  const double delta_se = delta_method_se(grad_h, sw, cfg.n);
  CHECK(summary.se == doctest::Approx(delta_se).epsilon(0.2));

  // coordinate projection reproduces the per-coefficient summary exactly
  const auto rep = summarize(chain, 0.05, cfg.n);
  const ScalarFunction first = [](const VectorXd& t) { return t[0]; };
  const auto coord = summarize_function(chain, first, 0.05, cfg.n);
  CHECK(coord.estimate == doctest::Approx(rep.coefficients[0].estimate).epsilon(1e-12));
  CHECK(coord.se == doctest::Approx(rep.coefficients[0].se).epsilon(1e-12));
  CHECK(coord.ci_lo == doctest::Approx(rep.coefficients[0].ci_lo).epsilon(1e-10));
  CHECK(coord.ci_hi == doctest::Approx(rep.coefficients[0].ci_hi).epsilon(1e-10));
}
