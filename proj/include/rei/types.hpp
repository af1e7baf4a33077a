#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rei {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowRef = Eigen::Ref<const Eigen::RowVectorXd>;

// ---------------------------------------------------------------------------
// Errors. The CLI maps ConfigError to exit code 2 and the numerical family to
// exit code 3; everything carries a category string for diagnostics.json.
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PlanMismatchError : std::runtime_error {
  explicit PlanMismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss/derivative; carries the offending row.
struct NumericalEvalError : std::runtime_error {
  NumericalEvalError(const std::string& msg, long row_index)
      : std::runtime_error(msg + " (row " + std::to_string(row_index) + ")"),
        row(row_index) {}
  long row;
};

struct SingularityError : std::runtime_error {
  explicit SingularityError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& msg, long iter, VectorXd last)
      : std::runtime_error(msg + " (iteration " + std::to_string(iter) + ")"),
        iteration(iter), last_finite(std::move(last)) {}
  long iteration;
  VectorXd last_finite;
};

struct ConditioningError : std::runtime_error {
  explicit ConditioningError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InsufficientDrawsError : std::runtime_error {
  explicit InsufficientDrawsError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Dataset: n fixed-width observation rows, optional cluster labels, optional
// panel layout (unit/time label per row, n_units * T == n).
// ---------------------------------------------------------------------------

struct PanelShape {
  int n_units = 0;
  int T = 0;
};

struct Dataset {
  MatrixXd rows; // n x width
  std::optional<std::vector<int>> cluster_ids;
  std::optional<PanelShape> panel;
  std::optional<std::vector<int>> unit_ids; // per-row, required with panel
  std::optional<std::vector<int>> time_ids; // per-row, 0..T-1

  long n() const { return rows.rows(); }
  long width() const { return rows.cols(); }

  void validate() const {
    if (rows.rows() < 1) throw ConfigError("dataset: n must be >= 1");
    if (cluster_ids && static_cast<long>(cluster_ids->size()) != rows.rows())
      throw ConfigError("dataset: cluster_ids length != n");
    if (panel) {
      if (static_cast<long>(panel->n_units) * panel->T != rows.rows())
        throw ConfigError("dataset: panel n_units*T != n");
      if (!unit_ids || !time_ids)
        throw ConfigError("dataset: panel requires unit_ids and time_ids");
    }
  }

  int cluster_count() const {
    if (!cluster_ids) return 0;
    int mx = -1;
    for (int c : *cluster_ids) mx = std::max(mx, c);
    return mx + 1;
  }
};

// ---------------------------------------------------------------------------
// ModelSpec: per-observation loss with derivative contracts. Callbacks must be
// pure and safe to call concurrently against an immutable Dataset; batch
// summation lives in evaluate(), not here.
// ---------------------------------------------------------------------------

struct ModelSpec {
  int d_theta = 0;
  std::string name;

  // q(z_i; theta)
  std::function<double(const RowRef&, const VectorXd&)> loss;
  // grad q into out (length d_theta)
  std::function<void(const RowRef&, const VectorXd&, VectorXd&)> gradient;
  // optional analytic hessian into out (d_theta x d_theta)
  std::function<void(const RowRef&, const VectorXd&, MatrixXd&)> hessian;

  bool analytic_gradient = true;
  bool has_hessian() const { return static_cast<bool>(hessian); }
};

struct EvalRequest {
  bool value = true;
  bool gradient = false;
  bool hessian = false;
};

struct ObjectiveEvaluation {
  double value = 0.0;
  std::optional<VectorXd> gradient;
  std::optional<MatrixXd> hessian; // symmetrized (H + H')/2
};

} // namespace rei
