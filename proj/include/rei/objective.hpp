#pragma once

#include "rei/resampling.hpp"
#include "rei/types.hpp"

namespace rei {

// Plan-weighted evaluation of Q, G, H. Index plans average over the resampled
// rows (1/m)Σ; weight plans compute (1/n)Σ w_i * term_i, skipping rows with
// weight exactly 0. A missing analytic Hessian is filled in by central finite
// differences of the gradient; the Hessian is always symmetrized (H + H')/2.
// Summation order is fixed, so results are bit-reproducible.
ObjectiveEvaluation evaluate(const ModelSpec& model, const Dataset& data,
                             const VectorXd& theta, const ResamplePlan& plan,
                             const EvalRequest& want);

// Plan gradient convenience.
VectorXd plan_gradient(const ModelSpec& model, const Dataset& data,
                       const VectorXd& theta, const ResamplePlan& plan);

// H_plan * s. Exact single pass over rows when the analytic Hessian is
// available, otherwise [G(theta + eps*s) - G(theta - eps*s)] / (2 eps) with
// eps = 1e-6 * max(1, ||theta||_inf).
VectorXd hessian_vector_product(const ModelSpec& model, const Dataset& data,
                                const VectorXd& theta, const ResamplePlan& plan,
                                const VectorXd& direction);

// Max over coordinates of |analytic - FD| / max(1, |FD|), central differences
// with per-coordinate step 1e-6 * max(1, |theta_j|).
double check_gradient(const ModelSpec& model, const Dataset& data, const VectorXd& theta);

} // namespace rei
