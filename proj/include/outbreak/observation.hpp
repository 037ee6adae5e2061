#pragma once

// Feature plumbing for the local (per-contact) and global (controller)
// observations.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "outbreak/belief.hpp"
#include "outbreak/sim.hpp"

namespace outbreak {

inline constexpr int kLocalObsDim = 16;
inline constexpr int kAlpha3Slot = 15;
inline constexpr int kAlpha2Slot = 16;  // only in the joint (alpha2, alpha3) variant
inline constexpr int kGlobalDim = 8;
inline constexpr int kClusterDim = 17;
inline constexpr int kObsSchemaVersion = 1;

/// Layout:
///   [0..2]   q_now as computed on t-3, t-2, t-1
///   [3..5]   P(infectious) on t+1, t+2, t+3
///   [6..8]   observed symptom flags on t-2, t-1, t
///   [9..11]  tested flags on t-3, t-2, t-1
///   [12..14] result codes of those tests (-1 missing, 0 negative, 1 positive)
///   [15]     alpha3_active
struct LocalObs {
  std::array<double, kLocalObsDim> values{};

  double& operator[](int i) { return values[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return values[static_cast<std::size_t>(i)]; }
  bool operator==(const LocalObs&) const = default;
};

/// Observation of contact `ind` on local day `day`, given its belief record.
LocalObs build_local(const IndividualState& ind, const BeliefRecord& belief, double alpha3_active,
                     int day, const EpiParams& epi);

/// Comma-separated %.17g rendering; parse_local inverts it exactly.
std::string serialize_local(const LocalObs& obs);
LocalObs parse_local(const std::string& text);

/// Column names of the local observation, in order.
const std::array<const char*, kLocalObsDim>& local_obs_columns();

struct GlobalObs {
  int n_max = 0;
  std::vector<double> values;  // kGlobalDim + kClusterDim * n_max
  /// Cluster id occupying each block; -1 for padding.
  std::vector<int> block_cluster;
  /// Number of features clipped into [-1, 4] while building.
  int clipped = 0;

  std::span<const double> global() const { return {values.data(), kGlobalDim}; }
  std::span<const double> block(int k) const {
    return {values.data() + kGlobalDim + static_cast<std::size_t>(k) * kClusterDim, kClusterDim};
  }
  int active_blocks() const;
};

/// Normalization constants of the global observation.
struct GlobalObsScale {
  int n_clusters = 1;        // C, for the active-cluster fraction
  int nominal_budget = 0;    // B_nominal; 0 means the current budget
  int cluster_size_max = 40; // N_max
  int episode_days = 30;     // T for cluster ages
  int result_delay_days = 1;
  double alpha3_true = 0.05;
};

GlobalObsScale global_scale(const SystemConfig& config);

/// Controller observation. `beliefs[id]` must be the tracker of cluster id
/// (null for clusters that are not active). Active clusters fill the blocks
/// in ascending id order; remaining blocks are zero. Throws CapacityError if
/// more than n_max clusters are active.
GlobalObs build_global(const MultiClusterState& state,
                       std::span<const ClusterBeliefTracker* const> beliefs,
                       const GlobalObsScale& scale, int n_max);

}  // namespace outbreak
