#include "outbreak/objective.hpp"

#include <string>

#include "outbreak/errors.hpp"

namespace outbreak {

void CostParams::validate() const {
  if (!(alpha2 >= 0.0)) throw ParameterError("alpha2 must be >= 0");
  if (!(alpha3_true >= 0.0)) throw ParameterError("alpha3_true must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ParameterError("gamma must lie in (0, 1]");
  if (budget < 0) throw ParameterError("budget must be >= 0");
  if (!(multiplier >= 0.0)) throw ParameterError("multiplier must be >= 0");
}

RewardBreakdown reward_from_normalized(double s1_norm, double s2_norm, double s3_norm,
                                       const CostParams& costs) {
  RewardBreakdown r;
  r.s1_norm = s1_norm;
  r.s2_norm = s2_norm;
  r.s3_norm = s3_norm;
  r.reward = -(s1_norm + costs.alpha2 * s2_norm + costs.alpha3_true * s3_norm);
  return r;
}

RewardBreakdown cluster_reward(double s1, double s2, double s3, int n, const CostParams& costs) {
  if (n < 1) throw ParameterError("cluster size must be >= 1, got " + std::to_string(n));
  if (s1 < 0.0 || s2 < 0.0 || s3 < 0.0) throw ParameterError("counters must be >= 0");
  const double inv = 1.0 / static_cast<double>(n);
  RewardBreakdown r;
  r.s1_norm = s1 * inv;
  r.s2_norm = s2 * inv;
  r.s3_norm = s3 * inv;
  r.reward = -(s1 + costs.alpha2 * s2 + costs.alpha3_true * s3) / static_cast<double>(n);
  return r;
}

double lagrangian_value(const LagrangianTrajectory& trajectory, double lambda,
                        const CostParams& costs) {
  if (!(costs.gamma > 0.0 && costs.gamma < 1.0)) {
    throw ParameterError("lagrangian_value needs gamma in (0, 1); the constant term diverges");
  }
  double total = 0.0;
  double discount = 1.0;
  for (const auto& step : trajectory) {
    double inner = 0.0;
    for (const auto& c : step) inner += c.reward - lambda * c.tests;
    total += discount * inner;
    discount *= costs.gamma;
  }
  return total + lambda * costs.budget / (1.0 - costs.gamma);
}

double active_cost(double multiplier, double alpha3_true) {
  if (!(multiplier >= 0.0)) throw ParameterError("multiplier must be >= 0");
  return multiplier * alpha3_true;
}

}  // namespace outbreak
