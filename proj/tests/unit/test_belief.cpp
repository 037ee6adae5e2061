#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "outbreak/belief.hpp"
#include "outbreak/errors.hpp"

using namespace outbreak;

namespace {

ObservationHistory to_library(const oracle::History& h, int day, const EpiParams& e) {
  ObservationHistory o;
  o.symptoms.assign(h.symptoms.begin(), h.symptoms.begin() + day + 1);
  o.results.assign(static_cast<std::size_t>(day) + 1, ResultCode::kMissing);
  for (int d = 0; d + e.result_delay_days <= day && d < static_cast<int>(h.results.size()); ++d) {
    const int r = h.results[static_cast<std::size_t>(d)];
    if (r >= 0) o.results[static_cast<std::size_t>(d)] = r ? ResultCode::kPositive : ResultCode::kNegative;
  }
  return o;
}

std::vector<oracle::History> random_histories(std::mt19937_64& rng, int n, int day) {
  std::bernoulli_distribution sym(0.15), tested(0.3), positive(0.4);
  std::vector<oracle::History> hs(static_cast<std::size_t>(n));
  for (auto& h : hs) {
    h.symptoms.assign(static_cast<std::size_t>(day) + 1, 0);
    h.results.assign(static_cast<std::size_t>(day) + 1, -1);
    for (int d = 0; d <= day; ++d) {
      h.symptoms[static_cast<std::size_t>(d)] = sym(rng) ? 1 : 0;
      if (d < day && tested(rng)) h.results[static_cast<std::size_t>(d)] = positive(rng) ? 1 : 0;
    }
  }
  return hs;
}

ClusterBelief library_posterior(const std::vector<oracle::History>& hs, int day, const EpiParams& e) {
  std::vector<ObservationHistory> obs;
  for (const auto& h : hs) obs.push_back(to_library(h, day, e));
  return posterior(obs, day, e);
}

}  // namespace

TEST_SUITE("belief") {
  TEST_CASE("no observations leave the prior") {
    EpiParams e;
    const double prior = prior_infection_probability(e);
    CHECK(prior == doctest::Approx(0.106518).epsilon(1e-9));
    oracle::History none;
    const auto ref = oracle::enumerate(e, {none, none}, 0);
    CHECK(ref.q_now[0] == doctest::Approx(prior).epsilon(1e-12));
    CHECK(quarantine_decision(prior, 0.1) == QuarantineDecision::kQuarantine);
  }

  TEST_CASE("a positive result multiplies the odds of infectiousness by 71") {
    EpiParams e;
    LatentModel m(e);
    const int test_day = 3;
    for (int z = 1; z < m.num_states(); ++z) {
      const double ratio = m.result_likelihood(z, test_day, true) / m.result_likelihood(0, test_day, true);
      if (m.infectious(z, test_day)) {
        CHECK(ratio == doctest::Approx(71.0).epsilon(1e-12));
      } else {
        CHECK(ratio == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("posterior equals exhaustive enumeration on small clusters") {
    EpiParams e;
    e.within_cluster_transmission = false;
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
      const int n = 2 + trial % 2;
      const int day = trial % 6;
      const auto hs = random_histories(rng, n, day);
      const auto lib = library_posterior(hs, day, e);
      const auto ref = oracle::enumerate(e, hs, day);
      worst = std::max(worst, std::abs(lib.p_high - ref.p_high));
      for (int i = 0; i < n; ++i) {
        const auto& rec = lib.records[static_cast<std::size_t>(i)];
        worst = std::max(worst, std::abs(rec.q_now - ref.q_now[static_cast<std::size_t>(i)]));
        for (int k = 0; k < 3; ++k) {
          worst = std::max(worst, std::abs(rec.q_future[static_cast<std::size_t>(k)] -
                                           ref.q_future[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]));
        }
        for (int k = 0; k < 3; ++k) {
          const int past = day - 3 + k;
          const double expect = past < 0 ? prior_infection_probability(e)
                                         : oracle::enumerate(e, hs, past).q_now[static_cast<std::size_t>(i)];
          worst = std::max(worst, std::abs(rec.q_past[static_cast<std::size_t>(k)] - expect));
        }
      }
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("incremental tracker matches the batch posterior") {
    EpiParams e;
    e.within_cluster_transmission = false;
    auto model = std::make_shared<const LatentModel>(e);
    auto c = spawn_cluster(31, e, 6);
    ClusterBeliefTracker tracker(model, c.size);
    std::mt19937_64 rng(5);
    for (int day = 0; day < 12; ++day) {
      tracker.update(c);
      std::vector<ObservationHistory> hs;
      for (const auto& ind : c.individuals) hs.push_back(history_at(ind, day, e));
      const auto batch = posterior(*model, hs, day);
      CHECK(tracker.belief().p_high == doctest::Approx(batch.p_high).epsilon(1e-10));
      for (int i = 0; i < c.size; ++i) {
        CHECK(tracker.record(i).q_now == doctest::Approx(batch.records[static_cast<std::size_t>(i)].q_now).epsilon(1e-10));
        for (int k = 0; k < 3; ++k) {
          CHECK(tracker.record(i).q_past[static_cast<std::size_t>(k)] ==
                doctest::Approx(batch.records[static_cast<std::size_t>(i)].q_past[static_cast<std::size_t>(k)]).epsilon(1e-10));
        }
      }
      std::vector<IndividualAction> acts(static_cast<std::size_t>(c.size));
      if (day >= e.decision_start_day) {
        for (auto& a : acts) a.test = std::bernoulli_distribution(0.3)(rng);
      }
      step_cluster(c, day, acts, e, 31);
    }
  }

  TEST_CASE("results move beliefs in the expected direction") {
    EpiParams e;
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 40; ++trial) {
      const int day = 4 + trial % 5;
      auto hs = random_histories(rng, 3, day);
      hs[0].results[static_cast<std::size_t>(day - 1)] = -1;
      const double before = library_posterior(hs, day, e).records[0].q_now;
      auto pos = hs;
      pos[0].results[static_cast<std::size_t>(day - 1)] = 1;
      auto neg = hs;
      neg[0].results[static_cast<std::size_t>(day - 1)] = 0;
      CHECK(library_posterior(pos, day, e).records[0].q_now >= before - 1e-15);
      CHECK(library_posterior(neg, day, e).records[0].q_now <= before + 1e-15);
    }
  }

  TEST_CASE("beliefs are calibrated") {
    EpiParams e;
    e.within_cluster_transmission = false;
    auto model = std::make_shared<const LatentModel>(e);
    // Bins of q_now on day 5 after random testing; compare to infected fraction.
    std::array<double, 20> mass{}, hits{}, count{};
    std::mt19937_64 rng(12);
    for (int k = 0; k < 4000; ++k) {
      auto c = spawn_cluster(500 + static_cast<std::uint64_t>(k), e, 4, k);
      ClusterBeliefTracker tr(model, c.size);
      for (int day = 0; day <= 5; ++day) {
        tr.update(c);
        if (day == 5) break;
        std::vector<IndividualAction> acts(4);
        if (day >= e.decision_start_day) {
          for (auto& a : acts) a.test = std::bernoulli_distribution(0.5)(rng);
        }
        step_cluster(c, day, acts, e, 500 + static_cast<std::uint64_t>(k));
      }
      for (int i = 0; i < 4; ++i) {
        const double q = tr.record(i).q_now;
        const auto b = std::min<std::size_t>(19, static_cast<std::size_t>(q / 0.05));
        mass[b] += q;
        count[b] += 1;
        hits[b] += c.individuals[static_cast<std::size_t>(i)].infected ? 1 : 0;
      }
    }
    int checked = 0;
    for (std::size_t b = 0; b < 20; ++b) {
      if (count[b] < 200) continue;
      const double p = mass[b] / count[b];
      const double band = 2.576 * std::sqrt(p * (1 - p) / count[b]) + 1e-3;
      CHECK(std::abs(hits[b] / count[b] - p) <= band);
      ++checked;
    }
    CHECK(checked >= 2);
  }

  TEST_CASE("threshold rule") {
    CHECK(quarantine_threshold(0.1) == doctest::Approx(1.0 / 11.0).epsilon(1e-15));
    CHECK(quarantine_decision(0.10, 0.1) == QuarantineDecision::kQuarantine);
    CHECK(quarantine_decision(0.09, 0.1) == QuarantineDecision::kRelease);
    CHECK(quarantine_decision(1e-9, 0.0) == QuarantineDecision::kQuarantine);
    CHECK(quarantine_decision(0.0, 0.0) == QuarantineDecision::kRelease);
    CHECK_THROWS_AS(quarantine_decision(0.5, -0.01), ParameterError);
    double prev = -1.0;
    for (double a2 : {0.0, 0.05, 0.1, 1.0, 10.0}) {
      const double th = quarantine_threshold(a2);
      CHECK(th > prev);
      CHECK(th < 1.0);
      prev = th;
    }
  }

  TEST_CASE("threshold rule minimizes the one-step expected cost") {
    for (double a2 : {0.0, 0.05, 0.1, 0.2, 1.0}) {
      for (int k = 0; k <= 100; ++k) {
        const double q = k / 100.0;
        const double quarantine_cost = a2 * (1.0 - q);
        const double release_cost = q;
        const auto d = quarantine_decision(q, a2);
        const double chosen = d == QuarantineDecision::kQuarantine ? quarantine_cost : release_cost;
        CHECK(chosen <= std::min(quarantine_cost, release_cost) + 1e-15);
      }
    }
  }
}
