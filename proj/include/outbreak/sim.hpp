#pragma once

// Individual-level stochastic simulator of contact-tracing clusters.
//
// Days are cluster-local: day 0 is the exposure to the index case. Each call to
// step_cluster() plays one local day in three phases:
//   1. the supplied quarantine/test actions take effect for that day,
//   2. the day is accounted (S1 infectious unquarantined, S2 quarantined
//      uninfected, S3 tests) and onward transmission happens,
//   3. the clock advances and the next day's observations are emitted
//      (symptoms, and results whose reporting delay has elapsed).
// Accounting starts at decision_start_day; earlier days fall inside the
// tracing delay when no intervention is possible.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "outbreak/epi.hpp"

namespace outbreak {

enum class ResultCode : std::int8_t { kMissing = -1, kNegative = 0, kPositive = 1 };

struct PendingResult {
  int available_day = 0;
  int test_day = 0;
  bool positive = false;
};

struct IndividualState {
  bool infected = false;
  std::optional<int> infection_day;
  std::optional<int> symptom_onset_day;
  bool will_be_symptomatic = false;
  bool quarantined = false;
  std::optional<int> quarantine_start_day;
  /// Indexed by local day; sized to the episode.
  std::vector<std::uint8_t> symptom_observed_history;
  std::vector<std::uint8_t> tested_history;
  std::vector<std::uint8_t> quarantine_history;
  std::vector<PendingResult> pending_results;
  /// Indexed by the day the sample was taken; kMissing until reported.
  std::vector<ResultCode> reported_results;

  bool infectious_on(const EpiParams& epi, int day) const;
  bool infected_by(int day) const { return infected && *infection_day <= day; }
};

enum class ClusterStatus : std::uint8_t { kPending, kActive, kFinished };

struct ClusterState {
  int id = 0;
  int size = 0;
  int activation_day = 0;  // global day of local day 0
  bool index_high_transmissive = false;
  std::vector<IndividualState> individuals;
  long s1_days = 0;
  long s2_days = 0;
  long s3_tests = 0;
  ClusterStatus status = ClusterStatus::kPending;
  /// Next local day to be played; observations through this day are visible.
  int current_day = 0;
  /// Tests executed per local day.
  std::vector<int> tests_per_day;

  bool active() const { return status == ClusterStatus::kActive; }
  bool finished() const { return status == ClusterStatus::kFinished; }
};

struct IndividualAction {
  bool test = false;
  bool quarantine = false;
};

/// Per-individual accounting of one played day.
struct IndividualOutcome {
  bool infectious_unquarantined = false;  // contributes to S1
  bool quarantined_uninfected = false;    // contributes to S2
  bool tested = false;                    // contributes to S3
};

struct ClusterStepOutcome {
  int day = 0;
  int ds1 = 0;
  int ds2 = 0;
  int ds3 = 0;
  std::vector<IndividualOutcome> individuals;
};

/// Draws a fresh cluster: index type, exposure infections, incubation and
/// symptomatic status, then emits day-0 observations. `cluster_id` keys the
/// random streams. Throws ParameterError if size is outside the configured range.
ClusterState spawn_cluster(std::uint64_t seed, const EpiParams& epi, int size, int cluster_id = 0,
                           int activation_day = 0);

/// Plays local `day` of an active cluster (see file comment). Throws StateError
/// for an inactive cluster, a day other than current_day, or interventions
/// requested before decision_start_day; ParameterError if actions are mis-sized.
ClusterStepOutcome step_cluster(ClusterState& cluster, int day,
                                std::span<const IndividualAction> actions, const EpiParams& epi,
                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// Multi-cluster system

enum class ActivationMode { kSynchronous, kAsynchronous };

struct ScheduleEntry {
  int cluster_id = 0;
  int activation_day = 0;
};

/// Synchronous: every cluster activates on day 0. Asynchronous: activation
/// days uniform on [0, stagger_window], ordered by (day, cluster id).
std::vector<ScheduleEntry> make_schedule(ActivationMode mode, int n_clusters, int n_max,
                                         int stagger_window, std::uint64_t seed);

struct SystemConfig {
  EpiParams epi;
  ActivationMode mode = ActivationMode::kAsynchronous;
  int n_clusters = 10;
  int n_max = 40;
  int stagger_window = 20;
  int budget = 10;
  /// Nominal budget used to normalize the controller observation; 0 = budget.
  int nominal_budget = 0;
  double alpha2 = 0.1;
  double alpha3_true = 0.05;
  /// When > 0, every cluster has this size instead of a uniform draw.
  int fixed_cluster_size = 0;

  void validate() const;
};

struct MultiClusterState {
  int day = 0;
  std::vector<ClusterState> clusters;  // indexed by cluster id
  std::vector<ScheduleEntry> activation_schedule;
  int budget = 0;
  std::uint64_t rng_root = 0;
  int last_demand = 0;
  double last_multiplier = 1.0;
  bool last_shortage = false;
  int horizon = 0;  // first day after every cluster has finished

  std::vector<int> active_ids() const;
  bool done() const { return day >= horizon; }
};

/// Per-cluster actions for one system day. Clusters omitted get no actions.
struct ClusterActions {
  int cluster_id = 0;
  std::vector<IndividualAction> actions;
};

struct JointActions {
  std::vector<ClusterActions> clusters;
  /// Controller bookkeeping recorded for the next observation.
  int demand = 0;
  double multiplier = 1.0;
};

struct ClusterStepReward {
  int cluster_id = 0;
  int size = 0;
  ClusterStepOutcome outcome;
  double reward = 0.0;  // -(ds1 + a2 ds2 + a3_true ds3) / N
};

struct SystemStepResult {
  int day = 0;
  int executed_tests = 0;
  std::vector<ClusterStepReward> rewards;
};

/// Builds the initial system (all clusters spawned, day-0 activations applied).
MultiClusterState make_system(const SystemConfig& config, std::uint64_t seed);

/// Plays one system day. Throws BudgetViolation if the joint actions test more
/// than `state.budget` individuals.
SystemStepResult step_system(MultiClusterState& state, const JointActions& joint,
                             const SystemConfig& config);

}  // namespace outbreak
