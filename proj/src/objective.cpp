#include "rei/objective.hpp"

#include <cmath>

namespace rei {

namespace {

struct Accumulator {
  double value = 0.0;
  VectorXd grad;
  MatrixXd hess;
  bool want_value, want_grad, want_hess;

  Accumulator(const EvalRequest& want, int d)
      : want_value(want.value), want_grad(want.gradient), want_hess(want.hessian) {
    if (want_grad) grad = VectorXd::Zero(d);
    if (want_hess) hess = MatrixXd::Zero(d, d);
  }
};

void add_row(const ModelSpec& model, const RowRef& row, const VectorXd& theta,
             double weight, long row_index, Accumulator& acc,
             VectorXd& grad_buf, MatrixXd& hess_buf) {
  if (acc.want_value) {
    const double q = model.loss(row, theta);
    if (!std::isfinite(q)) throw NumericalEvalError("non-finite loss", row_index);
    acc.value += weight * q;
  }
  if (acc.want_grad) {
    model.gradient(row, theta, grad_buf);
    if (!grad_buf.allFinite()) throw NumericalEvalError("non-finite gradient", row_index);
    acc.grad.noalias() += weight * grad_buf;
  }
  if (acc.want_hess && model.has_hessian()) {
    model.hessian(row, theta, hess_buf);
    if (!hess_buf.allFinite()) throw NumericalEvalError("non-finite hessian", row_index);
    acc.hess.noalias() += weight * hess_buf;
  }
}

void check_plan(const Dataset& data, const ResamplePlan& plan) {
  if (plan.kind == ResamplePlan::Kind::Indices) {
    for (int i : plan.indices)
      if (i < 0 || i >= data.n())
        throw PlanMismatchError("plan index out of range: " + std::to_string(i));
    if (plan.indices.empty()) throw PlanMismatchError("empty index plan");
  } else {
    if (plan.weights.size() != data.n())
      throw PlanMismatchError("weight plan length != n");
  }
}

} // namespace

ObjectiveEvaluation evaluate(const ModelSpec& model, const Dataset& data,
                             const VectorXd& theta, const ResamplePlan& plan,
                             const EvalRequest& want) {
  if (theta.size() != model.d_theta)
    throw ConfigError("evaluate: theta has wrong dimension");
  check_plan(data, plan);

  const int d = model.d_theta;
  const bool fd_hessian = want.hessian && !model.has_hessian();

  EvalRequest direct = want;
  if (fd_hessian) direct.hessian = false;

  Accumulator acc(direct, d);
  VectorXd grad_buf(d);
  MatrixXd hess_buf(d, d);

  if (plan.kind == ResamplePlan::Kind::Indices) {
    const double inv_m = 1.0 / static_cast<double>(plan.indices.size());
    for (int i : plan.indices)
      add_row(model, data.rows.row(i), theta, inv_m, i, acc, grad_buf, hess_buf);
  } else {
    const double inv_n = 1.0 / static_cast<double>(data.n());
    for (long i = 0; i < data.n(); ++i) {
      const double w = plan.weights[i];
      if (w == 0.0) continue;
      add_row(model, data.rows.row(i), theta, w * inv_n, i, acc, grad_buf, hess_buf);
    }
  }

  ObjectiveEvaluation out;
  out.value = acc.value;
  if (want.gradient) out.gradient = std::move(acc.grad);
  if (want.hessian) {
    MatrixXd H;
    if (fd_hessian) {
      // central differences of the plan gradient, column by column
      H.resize(d, d);
      VectorXd th = theta;
      for (int j = 0; j < d; ++j) {
        const double step = 1e-6 * std::max(1.0, std::abs(theta[j]));
        th[j] = theta[j] + step;
        VectorXd gp = plan_gradient(model, data, th, plan);
        th[j] = theta[j] - step;
        VectorXd gm = plan_gradient(model, data, th, plan);
        th[j] = theta[j];
        H.col(j) = (gp - gm) / (2.0 * step);
      }
    } else {
      H = std::move(acc.hess);
    }
    out.hessian = MatrixXd(0.5 * (H + H.transpose()));
  }
  return out;
}

VectorXd plan_gradient(const ModelSpec& model, const Dataset& data,
                       const VectorXd& theta, const ResamplePlan& plan) {
  EvalRequest want;
  want.value = false;
  want.gradient = true;
  return *evaluate(model, data, theta, plan, want).gradient;
}

VectorXd hessian_vector_product(const ModelSpec& model, const Dataset& data,
                                const VectorXd& theta, const ResamplePlan& plan,
                                const VectorXd& direction) {
  if (direction.norm() <= 0.0)
    throw ConfigError("hessian_vector_product: zero direction");
  if (model.has_hessian()) {
    check_plan(data, plan);
    const int d = model.d_theta;
    VectorXd out = VectorXd::Zero(d);
    MatrixXd hess_buf(d, d);
    if (plan.kind == ResamplePlan::Kind::Indices) {
      const double inv_m = 1.0 / static_cast<double>(plan.indices.size());
      for (int i : plan.indices) {
        model.hessian(data.rows.row(i), theta, hess_buf);
        if (!hess_buf.allFinite()) throw NumericalEvalError("non-finite hessian", i);
        out.noalias() += inv_m * (hess_buf * direction);
      }
    } else {
      const double inv_n = 1.0 / static_cast<double>(data.n());
      for (long i = 0; i < data.n(); ++i) {
        const double w = plan.weights[i];
        if (w == 0.0) continue;
        model.hessian(data.rows.row(i), theta, hess_buf);
        if (!hess_buf.allFinite()) throw NumericalEvalError("non-finite hessian", i);
        out.noalias() += (w * inv_n) * (hess_buf * direction);
      }
    }
    return out;
  }
  const double eps = 1e-6 * std::max(1.0, theta.cwiseAbs().maxCoeff());
  VectorXd gp = plan_gradient(model, data, theta + eps * direction, plan);
  VectorXd gm = plan_gradient(model, data, theta - eps * direction, plan);
  return (gp - gm) / (2.0 * eps);
}

double check_gradient(const ModelSpec& model, const Dataset& data, const VectorXd& theta) {
  if (!model.analytic_gradient)
    throw ConfigError("check_gradient: model has no analytic gradient");
  const ResamplePlan plan = unit_plan(data.n());
  const VectorXd analytic = plan_gradient(model, data, theta, plan);

  EvalRequest want_q;
  VectorXd th = theta;
  double worst = 0.0;
  for (int j = 0; j < model.d_theta; ++j) {
    const double step = 1e-6 * std::max(1.0, std::abs(theta[j]));
    th[j] = theta[j] + step;
    const double qp = evaluate(model, data, th, plan, want_q).value;
    th[j] = theta[j] - step;
    const double qm = evaluate(model, data, th, plan, want_q).value;
    th[j] = theta[j];
    const double fd = (qp - qm) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[j] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

} // namespace rei
