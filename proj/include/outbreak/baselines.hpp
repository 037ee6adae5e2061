#pragma once

// Heuristic allocation policies used for controlled comparison.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "outbreak/sim.hpp"

namespace outbreak {

enum class HeuristicKind { kSympAvgRand, kThresAvgRand, kThresSizeRand };

/// Equal split: floor(B / n) each, remainder one apiece to the lowest ids.
/// `sizes` are in ascending cluster-id order. Quotas are capped at the size.
std::vector<int> average_quotas(std::span<const int> sizes, int budget);
/// Largest-remainder split proportional to cluster size (ties to lower ids),
/// capped at the size.
std::vector<int> size_quotas(std::span<const int> sizes, int budget);

/// Uniform sample of min(quota, n) distinct indices from [0, n), drawn from
/// the counter stream of (seed, cluster, day, policy channel).
std::vector<int> sample_without_replacement(int n, int quota, std::uint64_t seed, int cluster_id,
                                            int day);

/// Symptom-based isolation: any observed symptom within the last `window`
/// days (through `day`), or any positive result reported so far.
bool symptom_quarantine(const IndividualState& ind, int day, int window, int result_delay_days);

struct HeuristicCluster {
  int cluster_id = 0;
  int size = 0;
  int local_day = 0;
};

/// Per-cluster test selections (individual indices) for the eligible clusters
/// given in ascending id order.
std::vector<std::vector<int>> heuristic_tests(HeuristicKind kind,
                                              std::span<const HeuristicCluster> clusters,
                                              int budget, std::uint64_t seed, int global_day);

}  // namespace outbreak
