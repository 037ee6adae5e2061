#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace outbreak {

struct CandidateAction {
  int cluster_id = 0;
  int individual_id = 0;
  double delta_q = 0.0;
};

struct Allocation {
  /// Aligned with the input candidates: 1 = test.
  std::vector<std::uint8_t> test;
  /// Executed candidates in rank order.
  std::vector<CandidateAction> selected;
  int candidates = 0;
  int positives = 0;  // |C+|, the proposed demand
  int executed = 0;
  int budget = 0;
};

/// Global Q-ranking: keep DeltaQ > 0, sort descending (ties by cluster id,
/// then individual id), test the top min(B, |C+|). Throws ParameterError for
/// B < 0 and InputError for duplicate (cluster, individual) keys.
Allocation q_rank_allocate(std::span<const CandidateAction> candidates, int budget);

/// Number of candidates with DeltaQ > 0.
int positive_demand(std::span<const double> delta_q);

}  // namespace outbreak
