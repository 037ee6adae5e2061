#pragma once

#include <vector>

namespace outbreak {

struct CostParams {
  double alpha2 = 0.1;
  double alpha3_true = 0.05;
  double gamma = 0.99;
  int budget = 0;
  double multiplier = 1.0;

  /// Per-test cost perceived by the local value estimates.
  double alpha3_active() const { return multiplier * alpha3_true; }
  void validate() const;
};

struct RewardBreakdown {
  double s1_norm = 0.0;
  double s2_norm = 0.0;
  double s3_norm = 0.0;
  double reward = 0.0;
};

/// Per-capita cluster reward -(S1 + a2 S2 + a3_true S3) / N. The active
/// multiplier never enters. Throws ParameterError for N < 1 or negative counters.
RewardBreakdown cluster_reward(double s1, double s2, double s3, int n, const CostParams& costs);

/// Same recomposition from already-normalized components.
RewardBreakdown reward_from_normalized(double s1_norm, double s2_norm, double s3_norm,
                                       const CostParams& costs);

/// One cluster's contribution to one timestep of a trajectory.
struct ClusterStepRecord {
  double reward = 0.0;
  int tests = 0;
};
using LagrangianTrajectory = std::vector<std::vector<ClusterStepRecord>>;

/// Budget-relaxed value sum_t gamma^t sum_n (R_n - lambda C_n) + lambda B / (1 - gamma).
/// Throws ParameterError unless gamma lies in (0, 1).
double lagrangian_value(const LagrangianTrajectory& trajectory, double lambda,
                        const CostParams& costs);

/// alpha3_active = m * alpha3_true. Throws ParameterError for m < 0.
double active_cost(double multiplier, double alpha3_true);

}  // namespace outbreak
