#include "rei/resampling.hpp"

#include <algorithm>

namespace rei {

namespace {

double draw_weight(Scheme scheme, RngStream& rng) {
  switch (scheme) {
    case Scheme::GaussianWeights: return 1.0 + rng.normal();
    case Scheme::ExponentialWeights: return rng.exponential();
    case Scheme::PoissonWeights: return static_cast<double>(rng.poisson_unit());
    default: throw ConfigError("draw_weight: not a weight scheme");
  }
}

// row indices grouped by cluster label
std::vector<std::vector<int>> cluster_rows(const Dataset& data) {
  const auto& ids = *data.cluster_ids;
  int n_clusters = data.cluster_count();
  std::vector<std::vector<int>> rows(n_clusters);
  for (long i = 0; i < data.n(); ++i) rows[ids[i]].push_back(static_cast<int>(i));
  return rows;
}

} // namespace

ResamplePlan draw_plan(const SchemeConfig& config, const Dataset& data, RngStream& rng) {
  const long n = data.n();
  if (config.cluster_aware && !data.cluster_ids)
    throw ConfigError("draw_plan: cluster_aware requires cluster_ids on the dataset");
  if (config.demean && config.scheme == Scheme::MOutOfN)
    throw ConfigError("draw_plan: demean only applies to weight schemes");
  if (config.scheme == Scheme::Unit) return unit_plan(n);

  if (config.scheme == Scheme::MOutOfN) {
    long m = config.m > 0 ? config.m : n;
    if (!config.cluster_aware) {
      if (m > n) throw ConfigError("draw_plan: m > n");
      std::vector<int> idx(m);
      for (long j = 0; j < m; ++j)
        idx[j] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      return ResamplePlan::from_indices(std::move(idx));
    }
    // m counts clusters: draw clusters with replacement, keep every row of each
    // drawn cluster so within-cluster dependence is preserved.
    const auto rows = cluster_rows(data);
    const long n_clusters = static_cast<long>(rows.size());
    if (m > n_clusters) m = n_clusters;
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(m) * (n / std::max<long>(1, n_clusters)));
    for (long j = 0; j < m; ++j) {
      const auto& members = rows[rng.uniform_int(static_cast<std::uint64_t>(n_clusters))];
      idx.insert(idx.end(), members.begin(), members.end());
    }
    const long eff_m = static_cast<long>(
        std::llround(static_cast<double>(m) * static_cast<double>(n) /
                     static_cast<double>(n_clusters)));
    return ResamplePlan::from_indices(std::move(idx), eff_m);
  }

  VectorXd w(n);
  if (!config.cluster_aware) {
    for (long i = 0; i < n; ++i) w[i] = draw_weight(config.scheme, rng);
  } else {
    const int n_clusters = data.cluster_count();
    VectorXd wc(n_clusters);
    for (int c = 0; c < n_clusters; ++c) wc[c] = draw_weight(config.scheme, rng);
    const auto& ids = *data.cluster_ids;
    for (long i = 0; i < n; ++i) w[i] = wc[ids[i]];
  }
  if (config.demean) w.array() -= w.mean(); // exactly mean-zero multipliers
  return ResamplePlan::from_weights(std::move(w));
}

} // namespace rei
