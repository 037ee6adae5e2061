#include "outbreak/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "outbreak/errors.hpp"
#include "outbreak/rng.hpp"

namespace outbreak {

std::vector<int> average_quotas(std::span<const int> sizes, int budget) {
  if (budget < 0) throw ParameterError("budget must be >= 0");
  const int n = static_cast<int>(sizes.size());
  std::vector<int> q(sizes.size(), 0);
  if (n == 0) return q;
  const int base = budget / n;
  const int rem = budget % n;
  for (int k = 0; k < n; ++k) {
    q[static_cast<std::size_t>(k)] =
        std::min(sizes[static_cast<std::size_t>(k)], base + (k < rem ? 1 : 0));
  }
  return q;
}

std::vector<int> size_quotas(std::span<const int> sizes, int budget) {
  if (budget < 0) throw ParameterError("budget must be >= 0");
  std::vector<int> q(sizes.size(), 0);
  const long total = std::accumulate(sizes.begin(), sizes.end(), 0L);
  if (total == 0) return q;
  std::vector<std::pair<long, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const long num = static_cast<long>(budget) * sizes[k];
    q[k] = static_cast<int>(num / total);
    assigned += q[k];
    remainders.push_back({num % total, k});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; j < remainders.size() && assigned < budget; ++j) {
    ++q[remainders[j].second];
    ++assigned;
  }
  for (std::size_t k = 0; k < sizes.size(); ++k) q[k] = std::min(q[k], sizes[k]);
  return q;
}

std::vector<int> sample_without_replacement(int n, int quota, std::uint64_t seed, int cluster_id,
                                            int day) {
  const int k = std::clamp(quota, 0, n);
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  CounterStream s(seed, static_cast<std::uint32_t>(cluster_id), kNoIndividual,
                  static_cast<std::uint32_t>(day), Channel::kPolicy);
  // Partial Fisher-Yates.
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<int>(s.uniform_int(i, n - 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

bool symptom_quarantine(const IndividualState& ind, int day, int window, int result_delay_days) {
  for (int d = std::max(0, day - window + 1); d <= day; ++d) {
    if (ind.symptom_observed_history[static_cast<std::size_t>(d)]) return true;
  }
  for (int t = 0; t + result_delay_days <= day; ++t) {
    if (ind.reported_results[static_cast<std::size_t>(t)] == ResultCode::kPositive) return true;
  }
  return false;
}

std::vector<std::vector<int>> heuristic_tests(HeuristicKind kind,
                                              std::span<const HeuristicCluster> clusters,
                                              int budget, std::uint64_t seed, int global_day) {
  std::vector<int> sizes;
  sizes.reserve(clusters.size());
  for (const auto& c : clusters) sizes.push_back(c.size);
  const auto quotas =
      kind == HeuristicKind::kThresSizeRand ? size_quotas(sizes, budget) : average_quotas(sizes, budget);
  std::vector<std::vector<int>> out;
  out.reserve(clusters.size());
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    out.push_back(sample_without_replacement(clusters[k].size, quotas[k], seed,
                                             clusters[k].cluster_id, global_day));
  }
  return out;
}

}  // namespace outbreak
