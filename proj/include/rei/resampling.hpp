#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rei/rng.hpp"
#include "rei/types.hpp"

namespace rei {

// One iteration's realized randomness: either m row indices drawn with
// replacement or one multiplier weight per row. effective_m is the m that
// enters the sqrt(m/(n*phi)) variance adjustment: the index count for plain
// index plans, n for weight plans, and the row-equivalent m_clusters*n/C for
// cluster index plans.
struct ResamplePlan {
  enum class Kind { Indices, Weights };
  Kind kind = Kind::Weights;
  std::vector<int> indices;
  VectorXd weights;
  long effective_m = 0;

  static ResamplePlan from_indices(std::vector<int> idx, long eff_m = -1) {
    ResamplePlan p;
    p.kind = Kind::Indices;
    p.indices = std::move(idx);
    p.effective_m = eff_m >= 0 ? eff_m : static_cast<long>(p.indices.size());
    return p;
  }
  static ResamplePlan from_weights(VectorXd w) {
    ResamplePlan p;
    p.kind = Kind::Weights;
    p.weights = std::move(w);
    p.effective_m = p.weights.size();
    return p;
  }
};

enum class Scheme {
  MOutOfN,
  GaussianWeights,
  ExponentialWeights,
  PoissonWeights,
  Unit, // degenerate all-ones weights, for full-sample runs and fixed-point checks
};

struct SchemeConfig {
  Scheme scheme = Scheme::GaussianWeights;
  long m = 0;              // index scheme only; counts clusters when cluster_aware
  bool cluster_aware = false;
  bool demean = false;     // weight schemes only (wild-score style multipliers)
};

// Degenerate plan (all weights 1): evaluate() under it equals the full-sample
// objective exactly.
inline ResamplePlan unit_plan(long n) {
  if (n < 1) throw ConfigError("unit_plan: n must be >= 1");
  return ResamplePlan::from_weights(VectorXd::Ones(n));
}

ResamplePlan draw_plan(const SchemeConfig& config, const Dataset& data, RngStream& rng);

// Plan for iteration b of a chain, on its own substream.
inline ResamplePlan draw_plan_at(const SchemeConfig& config, const Dataset& data,
                                 std::uint64_t seed, std::uint64_t iteration) {
  RngStream rng = derive_stream(seed, iteration, StreamPurpose::Plan);
  return draw_plan(config, data, rng);
}

} // namespace rei
