#pragma once

// Bayesian infection beliefs for traced contacts.
//
// Each contact's latent state is either "uninfected" or "infected at exposure
// with onset offset k and symptomatic flag s". Contacts of one cluster are
// conditionally independent given the index case type (ordinary or highly
// transmissive), so the cluster posterior is a two-component mixture: the
// index type is inferred from every contact's observations and each contact's
// own likelihood is reweighted under both components. Onward transmission
// inside the cluster is not modelled by the filter; in exposure-only runs the
// posterior is exact.

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "outbreak/epi.hpp"
#include "outbreak/sim.hpp"

namespace outbreak {

/// Per-contact latent state space. State 0 is uninfected; state 1 + 2k + s is
/// onset offset k (0..onset_cap) with symptomatic flag s.
class LatentModel {
 public:
  explicit LatentModel(const EpiParams& epi);

  int num_states() const { return num_states_; }
  const EpiParams& epi() const { return epi_; }

  static int state_index(int onset_offset, bool symptomatic) {
    return 1 + 2 * onset_offset + (symptomatic ? 1 : 0);
  }
  /// P(z | infected) for z >= 1; 0 for the uninfected state.
  double prior_given_infected(int z) const { return prior_[static_cast<std::size_t>(z)]; }
  bool infectious(int z, int day) const {
    return z > 0 && day >= inf_begin_[static_cast<std::size_t>(z)] &&
           day < inf_end_[static_cast<std::size_t>(z)];
  }
  bool symptomatic_on(int z, int day) const {
    return z > 0 && ((z - 1) & 1) && day >= onset_[static_cast<std::size_t>(z)] &&
           day < inf_end_[static_cast<std::size_t>(z)];
  }
  double symptom_likelihood(int z, int day, bool observed) const;
  double result_likelihood(int z, int test_day, bool positive) const;

 private:
  EpiParams epi_;
  int num_states_ = 0;
  std::vector<double> prior_;
  std::vector<int> onset_;
  std::vector<int> inf_begin_;
  std::vector<int> inf_end_;
};

struct BeliefRecord {
  std::array<double, 3> q_past{};    // q_now as computed on days t-3, t-2, t-1
  double q_now = 0.0;                // P(infected | observations through t)
  std::array<double, 3> q_future{};  // P(infectious on t+1, t+2, t+3 | observations)
};

/// What a decision-maker has seen about one contact by local day `day`.
struct ObservationHistory {
  std::vector<std::uint8_t> symptoms;  // days 0..day
  std::vector<ResultCode> results;     // by test day; only results reported by `day`
};

ObservationHistory history_at(const IndividualState& ind, int day, const EpiParams& epi);

struct ClusterBelief {
  int day = 0;
  double p_high = 0.0;  // posterior probability of a highly transmissive index
  std::vector<BeliefRecord> records;
  /// Normalized posterior over latent states, one vector per contact.
  std::vector<std::vector<double>> weights;
};

/// Prior probability that a contact was infected at exposure.
double prior_infection_probability(const EpiParams& epi);

/// Exact posterior from the full observation histories of a cluster. Pure
/// and recomputed from scratch, including the q_past entries.
ClusterBelief posterior(std::span<const ObservationHistory> histories, int day,
                        const EpiParams& epi);
ClusterBelief posterior(const LatentModel& model, std::span<const ObservationHistory> histories,
                        int day);

/// Incremental form of posterior() used while simulating. update() must be
/// called once per local day after the cluster has emitted that day's
/// observations; it matches posterior() to rounding.
class ClusterBeliefTracker {
 public:
  ClusterBeliefTracker(std::shared_ptr<const LatentModel> model, int size);

  void update(const ClusterState& cluster);
  int day() const { return day_; }
  const ClusterBelief& belief() const { return belief_; }
  const BeliefRecord& record(int i) const { return belief_.records[static_cast<std::size_t>(i)]; }
  std::span<const double> weights(int i) const { return belief_.weights[static_cast<std::size_t>(i)]; }
  /// q_now of contact i as computed on `day` (prior for days before 0).
  double q_on(int i, int day) const;

 private:
  std::shared_ptr<const LatentModel> model_;
  int size_;
  int day_ = -1;
  std::vector<std::vector<double>> likelihood_;
  std::vector<std::vector<double>> q_history_;
  ClusterBelief belief_;
};

enum class QuarantineDecision { kRelease, kQuarantine };

/// Cost-minimizing quarantine rule: quarantine iff q > alpha2 / (1 + alpha2).
/// Throws ParameterError for alpha2 < 0.
QuarantineDecision quarantine_decision(double q_now, double alpha2);
double quarantine_threshold(double alpha2);

}  // namespace outbreak
