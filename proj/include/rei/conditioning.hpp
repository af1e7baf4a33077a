#pragma once

#include <functional>
#include <string>

#include "rei/rng.hpp"
#include "rei/types.hpp"

namespace rei {

enum class ConditionerKind { Identity, HessianInverse, ModifiedHessianInverse, QuasiNewton };

struct ConditioningMatrix {
  MatrixXd matrix; // symmetric positive definite
  ConditionerKind provenance = ConditionerKind::Identity;
  double tau_applied = 0.0;
  bool fallback_used = false; // non-PD hessian forced the modified path
};

// (A + tau I)^{-1/2} via eigendecomposition Q diag((lam_i + tau)^{-1/2}) Q'.
ConditioningMatrix sym_inv_sqrt(const MatrixXd& A, double tau);

struct NrOptions {
  bool modify = false; // invert |eigenvalues| instead of eigenvalues
  double ridge = 0.0;  // value added to the diagonal (lambda/n in penalty terms)
};

// P = (H + ridge I)^{-1}, or with modify the Appendix-style
// ((H'H)^{1/2} + ridge I)^{-1}. A non-PD H with modify=false and ridge=0 falls
// back to the modified form and flags it.
ConditioningMatrix nr_conditioner(const MatrixXd& H, const NrOptions& options);

// ---------------------------------------------------------------------------
// Least-squares secant quasi-Newton update.
// ---------------------------------------------------------------------------

struct QnParams {
  int L = 0;                // secant count; resolved to max(25, ceil(1.5 d)) when 0
  double lambda_S = 1e-6;   // conditioning cutoff on lambda_min(S'S / L)
  double lambda_min = 1e-4; // curvature floor (tau = lambda_min^2 when triggered)
  int max_refresh = 0;      // while-loop cap; resolved to L when 0

  QnParams resolved(int d_theta) const {
    QnParams p = *this;
    if (p.L <= 0) p.L = std::max(25, static_cast<int>(std::ceil(1.5 * d_theta)));
    if (p.L < d_theta) throw ConfigError("QnParams: L must be >= d_theta");
    if (p.lambda_S <= 0.0 || p.lambda_min <= 0.0)
      throw ConfigError("QnParams: cutoffs must be positive");
    if (p.max_refresh <= 0) p.max_refresh = p.L;
    return p;
  }
};

// Rolling window of L unit-norm directions and Hessian-vector products, newest
// first. Owned by exactly one chain.
class SecantBuffer {
public:
  SecantBuffer(int L, int d, RngStream rng);

  void push(const VectorXd& s, const VectorXd& y); // evicts the oldest pair
  VectorXd random_unit_direction();

  const MatrixXd& directions() const { return S_; } // L x d
  const MatrixXd& products() const { return Y_; }   // L x d
  int window() const { return L_; }

private:
  int L_;
  MatrixXd S_, Y_;
  RngStream rng_;
};

// L random unit directions s_j with y_j = H0 s_j (pass the identity via H0 of
// size 0).
SecantBuffer init_secant_buffer(const MatrixXd& H0, int d, const QnParams& params,
                                RngStream rng);

using HvpCallback = std::function<VectorXd(const VectorXd&)>;

struct QnStepResult {
  ConditioningMatrix conditioner;
  MatrixXd hessian_estimate; // Y'S(S'S)^{-1}; Hhat'Hhat handles the asymmetry
  int refreshes = 0;
};

// One update of the secant window and conditioning matrix:
//   s_b = (theta_b - theta_prev)/||.|| (random unit direction on a zero step),
//   y_b = hvp(s_b), push; refresh while lambda_min(S'S/L) < lambda_S;
//   Hhat = Y'S(S'S)^{-1}; tau = lambda_min^2 if lambda_min(Hhat'Hhat) <=
//   lambda_min^2 else 0; P = (Hhat'Hhat + tau I)^{-1/2}.
QnStepResult rqn_step(SecantBuffer& buffer, const VectorXd& theta_b,
                      const VectorXd& theta_prev, const HvpCallback& hvp,
                      const QnParams& params);

} // namespace rei
