#pragma once

// Experiment orchestration: episodes x seeds under common random numbers,
// aggregation into result rows, CSV/JSON persistence, latency benchmarking
// and the tests-versus-cost sweep.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "outbreak/dqn.hpp"
#include "outbreak/engine.hpp"
#include "outbreak/sim.hpp"

namespace outbreak {

inline constexpr int kResultSchemaVersion = 1;

/// Desk-scale system: clusters of 2..10 people, C = 10, B = C.
SystemConfig desk_system();

struct ExperimentSpec {
  PolicyKind policy = PolicyKind::kFixedMQr;
  std::string value_checkpoint;  // empty: analytic backend
  std::string ppo_checkpoint;    // required for hier-ppo
  double fixed_m = 1.0;
  double m_min = 0.25;
  double m_max = 4.0;
  int search_iters = 30;
  int symptom_window = 3;
  SystemConfig system = desk_system();
  int episodes = 200;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int workers = 1;
  std::string output_dir;  // empty: nothing written
  bool dump_trajectory = false;

  void validate() const;
};

nlohmann::json to_json(const ExperimentSpec& spec);
/// Reads a full config document {"schema_version": 1, "system": {...},
/// "experiment": {...}}. Throws InputError / ParameterError naming the field.
ExperimentSpec experiment_from_json(const nlohmann::json& doc, const ExperimentSpec& base = {});

/// Per cluster-episode totals.
struct ClusterEpisode {
  std::uint64_t seed = 0;
  int episode = 0;
  int cluster = 0;
  int size = 0;
  int activation_day = 0;
  long s1 = 0;
  long s2 = 0;
  long s3 = 0;
  double reward = 0.0;  // -(s1 + a2 s2 + a3_true s3) / N
};

struct StepLog {
  int day = 0;
  int active_clusters = 0;
  DecisionTrace decision;
  double reward = 0.0;  // sum of the cluster rewards of the day
};

struct EpisodeResult {
  std::uint64_t seed = 0;
  int episode = 0;
  int days = 0;
  double episode_return = 0.0;  // mean over clusters of the per-capita reward
  double s1 = 0.0;              // per-capita means over clusters
  double s2 = 0.0;
  double s3 = 0.0;
  long tests = 0;
  int max_tests_minus_budget = 0;  // <= 0 when the budget held every day
  int budget_violations = 0;
  std::vector<ClusterEpisode> clusters;
  std::vector<StepLog> steps;
  std::vector<DayRecord> trajectory;  // only when trajectories are kept
};

/// Deterministic summary of one experiment.
struct ResultRow {
  std::string policy;
  std::string mode;
  int n_clusters = 0;
  int budget = 0;
  double alpha2 = 0.0;
  double alpha3_true = 0.0;
  int episodes = 0;
  int seeds = 0;
  double mean_return = 0.0;
  double std_return = 0.0;  // across per-seed means
  double s1 = 0.0;
  double s2 = 0.0;
  double s3 = 0.0;
  double tests_per_step = 0.0;
  double demand_evaluations_per_step = 0.0;
  double policy_evaluations_per_step = 0.0;
  long budget_violations = 0;

  bool operator==(const ResultRow&) const = default;
};

/// Wall-clock decision latency; not part of the deterministic row.
struct LatencyStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  long decisions = 0;
};

struct ExperimentResult {
  ResultRow row;
  LatencyStats latency;
  std::vector<EpisodeResult> episodes;
};

/// Builds the policy binding (loading checkpoints). Throws InputError when a
/// learned checkpoint was trained for a different alpha2.
PolicyBinding make_binding(const ExperimentSpec& spec);

EpisodeResult run_episode(const SystemConfig& config, const PolicyBinding& binding,
                          std::uint64_t seed, int episode, bool keep_individuals);

/// Runs every (seed, episode) pair; episode k of seed s uses
/// derive_seed(s, k), so policies sharing a seed share their epidemics.
ExperimentResult run_experiment(const ExperimentSpec& spec);
ExperimentResult run_experiment(const ExperimentSpec& spec, const PolicyBinding& binding);

nlohmann::json to_json(const ResultRow& row);
nlohmann::json to_json(const LatencyStats& latency);

/// Writes summary.json, result.csv, clusters.csv, steps.csv and optionally
/// trajectory.csv into dir (created if missing).
void write_outputs(const std::string& dir, const ExperimentSpec& spec,
                   const ExperimentResult& result);

/// Column order of trajectory.csv.
const std::vector<std::string>& trajectory_columns();

// ---------------------------------------------------------------------------

struct LatencyRow {
  int n_clusters = 0;
  int budget = 0;
  std::string policy;
  LatencyStats latency;
  double demand_evaluations_per_step = 0.0;
  double policy_evaluations_per_step = 0.0;
  double speedup_vs_first = 1.0;  // first policy's mean / this policy's mean
};

struct BenchSpec {
  std::vector<int> cluster_counts = {10, 20, 40};
  std::vector<double> budget_per_cluster = {2.0, 10.0};
  int cluster_size = 20;
  int episodes = 1;
  std::uint64_t seed = 1;
  SystemConfig base;  // epi and costs
};

/// Mean per-day decision time (environment stepping and belief updates
/// excluded) of each binding on each (C, B) cell.
std::vector<LatencyRow> bench_latency(const BenchSpec& spec,
                                      const std::vector<PolicyBinding>& bindings);

struct SweepRow {
  double alpha3 = 0.0;
  int bucket_upper = 0;  // 0 for the all-sizes row
  double tests_per_step = 0.0;
  double mean_return = 0.0;
};

std::vector<SweepRow> sweep_monotonicity(const QEstimator& est, const ClusterEnvSpec& env,
                                         double alpha2, const std::vector<double>& alpha3_grid,
                                         int episodes, std::uint64_t seed, int buckets = 3);

/// Adjacent increases along a curve, and the largest one relative to the
/// earlier value.
struct Inversions {
  int count = 0;
  double max_relative = 0.0;
};
Inversions count_inversions(const std::vector<double>& curve);

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "OUTBREAK_OUTPUT_ROOT";
std::string output_root();

}  // namespace outbreak
