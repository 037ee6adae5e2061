#pragma once

// Per-day decision pipeline of the multi-cluster system: belief refresh,
// quarantine rule, multiplier selection, marginal values, global ranking (or
// a heuristic split), then one simulator step.

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "outbreak/allocator.hpp"
#include "outbreak/belief.hpp"
#include "outbreak/controllers.hpp"
#include "outbreak/observation.hpp"
#include "outbreak/sim.hpp"
#include "outbreak/value.hpp"

namespace outbreak {

enum class PolicyKind { kSympAvgRand, kThresAvgRand, kThresSizeRand, kFixedMQr, kBinMQr, kHierPpo };

std::string policy_name(PolicyKind kind);
/// Accepts the names produced by policy_name(); throws ParameterError otherwise.
PolicyKind parse_policy(std::string_view name);
bool uses_ranking(PolicyKind kind);
std::vector<PolicyKind> all_policies();

struct PolicyBinding {
  PolicyKind kind = PolicyKind::kFixedMQr;
  std::shared_ptr<const QEstimator> estimator;  // ranking policies
  std::shared_ptr<const PpoPolicy> ppo;         // hier-ppo
  MultiplierRange range;
  double fixed_m = 1.0;
  int search_iters = 30;  // cap on DeltaQ passes per step, ranking pass included
  int symptom_window = 3;

  void validate() const;
};

/// Manual steering for one step: a multiplier replaces the controller's
/// choice, a budget replaces B for this step only.
struct StepOverride {
  std::optional<double> multiplier;
  std::optional<int> budget;
};

struct DecisionTrace {
  double multiplier = 1.0;
  int budget = 0;
  int candidates = 0;
  int demand = 0;  // proposed tests (DeltaQ > 0) at the applied multiplier
  int executed = 0;
  int demand_evaluations = 0;  // full DeltaQ passes this step, ranking pass included
  int policy_evaluations = 0;  // PPO forward passes
  double decision_seconds = 0.0;
  bool overridden = false;
};

struct IndividualDayRecord {
  int cluster = 0;
  int local_day = 0;
  int individual = 0;
  bool infected = false;
  bool infectious = false;
  bool symptom = false;     // observed today
  int result = -1;          // result reported today (-1 none, 0 negative, 1 positive)
  double q_now = 0.0;
  double delta_q = 0.0;     // 0 when not a ranking candidate
  bool test = false;
  bool quarantine = false;
  int s1 = 0;
  int s2 = 0;
  int s3 = 0;
  LocalObs obs;  // alpha3 slot holds the applied active cost
};

struct DayRecord {
  int day = 0;
  int active_clusters = 0;
  DecisionTrace decision;
  SystemStepResult step;
  std::vector<IndividualDayRecord> individuals;
};

class Engine {
 public:
  Engine(const SystemConfig& config, std::uint64_t seed, PolicyBinding policy,
         bool record_individuals = true);

  const SystemConfig& config() const { return config_; }
  const MultiClusterState& state() const { return state_; }
  const PolicyBinding& policy() const { return policy_; }
  std::uint64_t seed() const { return seed_; }
  bool done() const { return state_.done(); }

  void set_policy(PolicyBinding policy);
  void set_budget(int budget);

  /// Brings beliefs up to date and returns the controller observation.
  GlobalObs observe_global();
  /// Plays one system day. Throws StateError when the episode is over.
  DayRecord step(const StepOverride& override_ = {});

  /// Belief tracker of an active or finished cluster (null while pending).
  const ClusterBeliefTracker* tracker(int cluster_id) const;

 private:
  SystemConfig config_;
  std::uint64_t seed_;
  PolicyBinding policy_;
  bool record_;
  std::shared_ptr<const LatentModel> model_;
  MultiClusterState state_;
  std::vector<std::optional<ClusterBeliefTracker>> trackers_;

  void refresh_beliefs();
};

}  // namespace outbreak
