#include "outbreak/allocator.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "outbreak/errors.hpp"

namespace outbreak {

Allocation q_rank_allocate(std::span<const CandidateAction> candidates, int budget) {
  if (budget < 0) throw ParameterError("budget must be >= 0");
  Allocation out;
  out.budget = budget;
  out.candidates = static_cast<int>(candidates.size());
  out.test.assign(candidates.size(), 0);

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto key_less = [&](std::size_t a, std::size_t b) {
    const auto& x = candidates[a];
    const auto& y = candidates[b];
    return x.cluster_id != y.cluster_id ? x.cluster_id < y.cluster_id
                                        : x.individual_id < y.individual_id;
  };
  std::sort(order.begin(), order.end(), key_less);
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (!key_less(order[k - 1], order[k])) {
      const auto& c = candidates[order[k]];
      throw InputError("duplicate candidate (cluster " + std::to_string(c.cluster_id) +
                       ", individual " + std::to_string(c.individual_id) + ")");
    }
  }

  std::vector<std::size_t> positive;
  for (std::size_t i : order) {
    if (candidates[i].delta_q > 0.0) positive.push_back(i);
  }
  out.positives = static_cast<int>(positive.size());
  // Stable sort on the key-ordered list keeps (cluster, individual) as the tie-break.
  std::stable_sort(positive.begin(), positive.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].delta_q > candidates[b].delta_q;
  });
  const std::size_t k = std::min(positive.size(), static_cast<std::size_t>(budget));
  for (std::size_t j = 0; j < k; ++j) {
    out.test[positive[j]] = 1;
    out.selected.push_back(candidates[positive[j]]);
  }
  out.executed = static_cast<int>(k);
  return out;
}

int positive_demand(std::span<const double> delta_q) {
  return static_cast<int>(std::count_if(delta_q.begin(), delta_q.end(),
                                        [](double v) { return v > 0.0; }));
}

}  // namespace outbreak
