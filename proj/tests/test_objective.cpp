#include <doctest.h>

#include <Eigen/Dense>

#include "rei/models.hpp"
#include "rei/objective.hpp"

using namespace rei;

namespace {

Dataset two_point_ols() {
  Dataset d;
  d.rows.resize(2, 2); // (y, x)
  d.rows << 1.0, 1.0,
            2.0, 1.0;
  return d;
}

Dataset random_ols_data(long n, int d, std::uint64_t seed) {
  RngStream rng(seed, 0, StreamPurpose::Dgp);
  Dataset data;
  data.rows.resize(n, d + 1);
  for (long i = 0; i < n; ++i) {
    data.rows(i, 1) = 1.0;
    for (int j = 2; j <= d; ++j) data.rows(i, j) = rng.normal();
    data.rows(i, 0) = data.rows.row(i).tail(d).sum() + rng.normal();
  }
  return data;
}

VectorXd ols_solve(const Dataset& data) {
  const int d = static_cast<int>(data.width() - 1);
  const MatrixXd X = data.rows.rightCols(d);
  const VectorXd y = data.rows.col(0);
  return (X.transpose() * X).ldlt().solve(X.transpose() * y);
}

} // namespace

TEST_CASE("ols hand values on {(1,1),(2,1)} at theta = 0") {
  const Dataset data = two_point_ols();
  const ModelSpec model = make_ols(1);
  EvalRequest want;
  want.gradient = true;
  want.hessian = true;
  const auto eval = evaluate(model, data, VectorXd::Zero(1), unit_plan(2), want);
  CHECK(eval.value == doctest::Approx(1.25).epsilon(1e-14)); // (1/2n) sum (y - x theta)^2
  CHECK((*eval.gradient)[0] == doctest::Approx(-1.5).epsilon(1e-14));
  CHECK((*eval.hessian)(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("gradient vanishes at the full-sample ols solution") {
  const Dataset data = random_ols_data(80, 3, 7);
  const ModelSpec model = make_ols(3);
  const VectorXd theta_hat = ols_solve(data);
  const VectorXd g = plan_gradient(model, data, theta_hat, unit_plan(data.n()));
  CHECK(g.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("unit-weight plan equals index plan 0..n-1 exactly") {
  const Dataset data = random_ols_data(40, 2, 11);
  const ModelSpec model = make_ols(2);
  VectorXd theta(2);
  theta << 0.3, -0.7;
  std::vector<int> idx(data.n());
  for (long i = 0; i < data.n(); ++i) idx[i] = static_cast<int>(i);
  EvalRequest want;
  want.gradient = true;
  want.hessian = true;
  const auto a = evaluate(model, data, theta, unit_plan(data.n()), want);
  const auto b = evaluate(model, data, theta, ResamplePlan::from_indices(idx), want);
  CHECK(a.value == b.value);
  CHECK((*a.gradient - *b.gradient).cwiseAbs().maxCoeff() == 0.0);
  CHECK((*a.hessian - *b.hessian).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("evaluate is linear in the weights") {
  const Dataset data = random_ols_data(30, 2, 13);
  const ModelSpec model = make_ols(2);
  VectorXd theta(2);
  theta << 1.0, 0.5;
  RngStream rng(3, 0, StreamPurpose::Plan);
  VectorXd w(data.n());
  for (long i = 0; i < data.n(); ++i) w[i] = rng.exponential();
  EvalRequest want;
  want.gradient = true;
  want.hessian = true;
  const auto one = evaluate(model, data, theta, ResamplePlan::from_weights(w), want);
  const auto two = evaluate(model, data, theta, ResamplePlan::from_weights(2.0 * w), want);
  CHECK(two.value == doctest::Approx(2.0 * one.value).epsilon(1e-13));
  CHECK((*two.gradient - 2.0 * *one.gradient).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((*two.hessian - 2.0 * *one.hessian).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ols closed forms hold on arbitrary index plans") {
  const Dataset data = random_ols_data(60, 3, 17);
  const ModelSpec model = make_ols(3);
  VectorXd theta(3);
  theta << -0.2, 0.4, 1.1;
  RngStream rng(5, 2, StreamPurpose::Plan);
  std::vector<int> idx(25);
  for (auto& i : idx) i = static_cast<int>(rng.uniform_int(60));

  MatrixXd Xp(25, 3);
  VectorXd yp(25);
  for (int r = 0; r < 25; ++r) {
    Xp.row(r) = data.rows.row(idx[r]).tail(3);
    yp[r] = data.rows(idx[r], 0);
  }
  EvalRequest want;
  want.gradient = true;
  want.hessian = true;
  const auto eval = evaluate(model, data, theta, ResamplePlan::from_indices(idx), want);
  const VectorXd G = -Xp.transpose() * (yp - Xp * theta) / 25.0;
  const MatrixXd H = Xp.transpose() * Xp / 25.0;
  CHECK((*eval.gradient - G).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((*eval.hessian - H).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("fd hessian is symmetrized and matches the analytic quadratic") {
  MatrixXd H(2, 2);
  H << 2.0, 0.3,
       0.3, 3.0;
  const QuadraticModel quad = make_quadratic(H, VectorXd::Zero(2));
  ModelSpec with = quad.spec();
  ModelSpec without = with;
  without.hessian = nullptr; // force finite differences
  const Dataset data = dummy_dataset(4);
  VectorXd theta(2);
  theta << 0.5, -1.0;
  EvalRequest want;
  want.hessian = true;
  const auto a = evaluate(with, data, theta, unit_plan(4), want);
  const auto b = evaluate(without, data, theta, unit_plan(4), want);
  CHECK((*a.hessian - H).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((*b.hessian - H).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((*b.hessian - b.hessian->transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hvp: exact for quadratics, linear in the direction") {
  MatrixXd H = MatrixXd::Zero(2, 2);
  H(0, 0) = 2.0;
  H(1, 1) = 3.0;
  const QuadraticModel quad = make_quadratic(H, VectorXd::Zero(2));
  const ModelSpec model = quad.spec();
  const Dataset data = dummy_dataset(3);
  VectorXd s(2);
  s << 1.0, 0.0;
  VectorXd theta(2);
  theta << 0.2, 0.9;
  const VectorXd y = hessian_vector_product(model, data, theta, unit_plan(3), s);
  CHECK(y[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.0).epsilon(1e-12));

  // linearity, including on the finite-difference path
  ModelSpec fd = model;
  fd.hessian = nullptr;
  VectorXd s2(2);
  s2 << 0.4, -0.8;
  const VectorXd one = hessian_vector_product(fd, data, theta, unit_plan(3), s2);
  const VectorXd two = hessian_vector_product(fd, data, theta, unit_plan(3), 2.0 * s2);
  CHECK((two - 2.0 * one).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, two.cwiseAbs().maxCoeff()));
}

TEST_CASE("probit hvp agrees with the full fd hessian") {
  DgpConfig cfg;
  cfg.kind = DgpKind::ProbitDgp;
  cfg.n = 150;
  cfg.theta = VectorXd::Zero(3);
  cfg.theta << 0.5, 0.8, -0.4;
  cfg.seed = 23;
  const auto sim = simulate_dgp(cfg);
  const ModelSpec model = make_probit(3);
  VectorXd theta(3);
  theta << 0.2, 0.5, -0.1;
  VectorXd s(3);
  s << 1.0, -2.0, 0.5;

  ModelSpec fd = model;
  fd.hessian = nullptr;
  EvalRequest want;
  want.hessian = true;
  const MatrixXd H_full =
      *evaluate(fd, sim.data, theta, unit_plan(cfg.n), want).hessian;
  const VectorXd exact = hessian_vector_product(model, sim.data, theta, unit_plan(cfg.n), s);
  const VectorXd Hs = H_full * s;
  CHECK((exact - Hs).cwiseAbs().maxCoeff() <= 1e-5 * Hs.cwiseAbs().maxCoeff());
}

TEST_CASE("hvp rejects the zero direction") {
  const Dataset data = two_point_ols();
  CHECK_THROWS_AS(hessian_vector_product(make_ols(1), data, VectorXd::Zero(1),
                                         unit_plan(2), VectorXd::Zero(1)),
                  ConfigError);
}

TEST_CASE("check_gradient: right gradients pass, a wrong one is caught") {
  const Dataset data = random_ols_data(50, 3, 29);
  const ModelSpec ols = make_ols(3);
  RngStream rng(31, 0, StreamPurpose::Start);
  VectorXd theta(3);
  for (int j = 0; j < 3; ++j) theta[j] = rng.normal();
  CHECK(check_gradient(ols, data, theta) < 1e-7);

  DgpConfig cfg;
  cfg.kind = DgpKind::ProbitDgp;
  cfg.n = 120;
  cfg.theta = VectorXd::Zero(2);
  cfg.theta << 0.3, -0.6;
  cfg.seed = 37;
  const auto sim = simulate_dgp(cfg);
  const ModelSpec probit = make_probit(2);
  const VectorXd start = probit_start_from_lpm(sim.data);
  CHECK(check_gradient(probit, sim.data, start) < 1e-5);

  ModelSpec wrong = ols;
  wrong.gradient = [inner = ols.gradient](const RowRef& row, const VectorXd& th, VectorXd& out) {
    inner(row, th, out);
    out *= 0.5; // deliberately off by a factor of 2
  };
  VectorXd far(3);
  far << 10.0, -10.0, 10.0; // |FD| > 1 here, so the ratio is |g/2| / |g|
  const double disc = check_gradient(wrong, data, far);
  CHECK(disc == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("errors carry their category") {
  const Dataset data = two_point_ols();
  const ModelSpec model = make_ols(1);
  EvalRequest want;

  // out-of-range index
  CHECK_THROWS_AS(evaluate(model, data, VectorXd::Zero(1),
                           ResamplePlan::from_indices({0, 5}), want),
                  PlanMismatchError);

  // non-finite loss reports the row
  ModelSpec bad = model;
  bad.loss = [](const RowRef& row, const VectorXd&) {
    return row[0] > 1.5 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  };
  try {
    evaluate(bad, data, VectorXd::Zero(1), unit_plan(2), want);
    CHECK(false);
  } catch (const NumericalEvalError& e) {
    CHECK(e.row == 1);
  }
}

TEST_CASE("probit loss at theta = 0 is log 2 per observation and tails stay finite") {
  DgpConfig cfg;
  cfg.kind = DgpKind::ProbitDgp;
  cfg.n = 50;
  cfg.theta = VectorXd::Ones(2);
  cfg.seed = 41;
  const auto sim = simulate_dgp(cfg);
  const ModelSpec model = make_probit(2);
  EvalRequest want;
  const auto eval = evaluate(model, sim.data, VectorXd::Zero(2), unit_plan(50), want);
  CHECK(eval.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // deep tails: |x'theta| up to 30, loss finite, gradient matches FD
  Dataset tail;
  tail.rows.resize(4, 2);
  tail.rows << 1.0, 1.0,
               0.0, 1.0,
               1.0, -1.0,
               0.0, -1.0;
  for (double scale : {8.0, 15.0, 30.0}) {
    VectorXd theta(1);
    theta << scale;
    const ModelSpec m1 = make_probit(1);
    EvalRequest wv;
    const double q = evaluate(m1, tail, theta, unit_plan(4), wv).value;
    CHECK(std::isfinite(q));
    CHECK(check_gradient(m1, tail, theta) < 1e-5);
  }
}
