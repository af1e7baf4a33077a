#include "rei/conditioning.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace rei {

ConditioningMatrix sym_inv_sqrt(const MatrixXd& A, double tau) {
  const MatrixXd As = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(As);
  // A is positive semidefinite by contract; eigenvalues below zero are
  // rounding noise from badly scaled inputs
  const VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  if ((lam.array() + tau).minCoeff() <= 1e-14)
    throw SingularityError("sym_inv_sqrt: A + tau I is numerically singular");
  VectorXd inv_sqrt = (lam.array() + tau).rsqrt();
  ConditioningMatrix out;
  out.matrix = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
  out.tau_applied = tau;
  return out;
}

ConditioningMatrix nr_conditioner(const MatrixXd& H, const NrOptions& options) {
  const long d = H.rows();
  const MatrixXd Hs = 0.5 * (H + H.transpose());
  ConditioningMatrix out;

  auto modified = [&](bool fallback) {
    // eigenvalues replaced by their absolute values before ridging
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Hs);
    VectorXd lam = es.eigenvalues().cwiseAbs();
    lam.array() += options.ridge;
    if (lam.minCoeff() <= 1e-14)
      throw SingularityError("nr_conditioner: singular after modification/ridge");
    out.matrix = es.eigenvectors() * lam.cwiseInverse().asDiagonal() *
                 es.eigenvectors().transpose();
    out.provenance = ConditionerKind::ModifiedHessianInverse;
    out.fallback_used = fallback;
    out.tau_applied = options.ridge;
  };

  if (options.modify) {
    modified(false);
    return out;
  }

  MatrixXd Hr = Hs;
  Hr.diagonal().array() += options.ridge;
  Eigen::LLT<MatrixXd> llt(Hr);
  if (llt.info() == Eigen::Success) {
    out.matrix = llt.solve(MatrixXd::Identity(d, d));
    out.matrix = 0.5 * (out.matrix + out.matrix.transpose());
    out.provenance = ConditionerKind::HessianInverse;
    out.tau_applied = options.ridge;
    return out;
  }
  if (options.ridge > 0.0)
    throw SingularityError("nr_conditioner: H + ridge I not positive definite");
  modified(true); // non-PD hessian: fall back to |eigenvalue| inversion
  return out;
}

SecantBuffer::SecantBuffer(int L, int d, RngStream rng)
    : L_(L), S_(MatrixXd::Zero(L, d)), Y_(MatrixXd::Zero(L, d)), rng_(rng) {}

void SecantBuffer::push(const VectorXd& s, const VectorXd& y) {
  // newest pair in row 0, oldest falls off the end
  for (int r = L_ - 1; r > 0; --r) {
    S_.row(r) = S_.row(r - 1);
    Y_.row(r) = Y_.row(r - 1);
  }
  S_.row(0) = s.transpose();
  Y_.row(0) = y.transpose();
}

VectorXd SecantBuffer::random_unit_direction() {
  VectorXd s(S_.cols());
  double norm = 0.0;
  do {
    for (long j = 0; j < s.size(); ++j) s[j] = rng_.normal();
    norm = s.norm();
  } while (norm == 0.0);
  return s / norm;
}

SecantBuffer init_secant_buffer(const MatrixXd& H0, int d, const QnParams& params,
                                RngStream rng) {
  const QnParams p = params.resolved(d);
  SecantBuffer buf(p.L, d, rng);
  const bool identity = H0.size() == 0;
  for (int j = 0; j < p.L; ++j) {
    VectorXd s = buf.random_unit_direction();
    VectorXd y = identity ? s : VectorXd(H0 * s);
    buf.push(s, y);
  }
  return buf;
}

QnStepResult rqn_step(SecantBuffer& buffer, const VectorXd& theta_b,
                      const VectorXd& theta_prev, const HvpCallback& hvp,
                      const QnParams& params) {
  const int d = static_cast<int>(theta_b.size());
  const QnParams p = params.resolved(d);
  const double L = static_cast<double>(buffer.window());

  VectorXd s = theta_b - theta_prev;
  const double step_norm = s.norm();
  if (step_norm <= 1e-14 * std::max(1.0, theta_b.norm()))
    s = buffer.random_unit_direction(); // exact fixed point: any direction informs
  else
    s /= step_norm;
  buffer.push(s, hvp(s));

  QnStepResult result;
  auto gram_min = [&] {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(
        buffer.directions().transpose() * buffer.directions() / L);
    return es.eigenvalues().minCoeff();
  };
  while (gram_min() < p.lambda_S) {
    if (result.refreshes >= p.max_refresh)
      throw ConditioningError("rqn_step: direction window degenerate after " +
                              std::to_string(result.refreshes) + " refreshes");
    VectorXd fresh = buffer.random_unit_direction();
    buffer.push(fresh, hvp(fresh));
    ++result.refreshes;
  }

  const MatrixXd& S = buffer.directions();
  const MatrixXd& Y = buffer.products();
  const MatrixXd StS = S.transpose() * S;
  result.hessian_estimate = Y.transpose() * S * StS.ldlt().solve(MatrixXd::Identity(d, d));

  const MatrixXd HtH = result.hessian_estimate.transpose() * result.hessian_estimate;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(HtH);
  const double floor2 = p.lambda_min * p.lambda_min;
  const double tau = es.eigenvalues().minCoeff() <= floor2 ? floor2 : 0.0;

  result.conditioner = sym_inv_sqrt(HtH, tau);
  result.conditioner.provenance = ConditionerKind::QuasiNewton;
  return result;
}

} // namespace rei
