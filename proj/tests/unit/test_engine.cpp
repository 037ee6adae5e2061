#include <random>

#include "doctest.h"
#include "outbreak/errors.hpp"
#include "outbreak/engine.hpp"
#include "outbreak/harness.hpp"

using namespace outbreak;

namespace {

SystemConfig small_system(int budget) {
  SystemConfig c = desk_system();
  c.n_clusters = 6;
  c.stagger_window = 5;
  c.budget = budget;
  return c;
}

PolicyBinding binding(PolicyKind kind, const SystemConfig& c) {
  PolicyBinding b;
  b.kind = kind;
  b.estimator = std::make_shared<AnalyticEstimator>(std::make_shared<const LatentModel>(c.epi), c.alpha2);
  if (kind == PolicyKind::kHierPpo) {
    auto p = std::make_shared<PpoPolicy>();
    std::mt19937_64 rng(1);
    p->init(rng);
    b.ppo = p;
  }
  return b;
}

struct Totals {
  std::vector<int> tests;
  std::vector<double> multipliers;
  long s1 = 0, s2 = 0, s3 = 0;
};

Totals play(Engine& e) {
  Totals t;
  while (!e.done()) {
    const auto r = e.step();
    CHECK(r.step.executed_tests <= r.decision.budget);
    t.tests.push_back(r.step.executed_tests);
    t.multipliers.push_back(r.decision.multiplier);
    for (const auto& cr : r.step.rewards) {
      t.s1 += cr.outcome.ds1;
      t.s2 += cr.outcome.ds2;
      t.s3 += cr.outcome.ds3;
    }
  }
  return t;
}

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("policy names round trip") {
    for (auto k : all_policies()) CHECK(parse_policy(policy_name(k)) == k);
    CHECK(all_policies().size() == 6);
    CHECK_THROWS_AS(parse_policy("greedy"), ParameterError);
  }

  TEST_CASE("every policy respects the budget") {
    for (int budget : {0, 1, 3, 10}) {
      const auto cfg = small_system(budget);
      for (auto k : all_policies()) {
        Engine e(cfg, 17, binding(k, cfg), false);
        const auto t = play(e);
        if (budget == 0) CHECK(t.s3 == 0);
      }
    }
  }

  TEST_CASE("episodes are deterministic") {
    const auto cfg = small_system(4);
    for (auto k : {PolicyKind::kSympAvgRand, PolicyKind::kBinMQr, PolicyKind::kHierPpo}) {
      Engine a(cfg, 5, binding(k, cfg)), b(cfg, 5, binding(k, cfg));
      const auto ta = play(a), tb = play(b);
      CHECK(ta.tests == tb.tests);
      CHECK(ta.multipliers == tb.multipliers);
      CHECK(ta.s1 == tb.s1);
      CHECK(ta.s2 == tb.s2);
    }
  }

  TEST_CASE("one-step budget override") {
    const auto cfg = small_system(50);
    Engine e(cfg, 3, binding(PolicyKind::kFixedMQr, cfg));
    // Advance to a day with ranking candidates.
    int guard = 0;
    while (!e.done() && guard++ < 60) {
      StepOverride ov;
      ov.budget = 1;
      const auto r = e.step(ov);
      CHECK(r.decision.budget == 1);
      CHECK(r.decision.overridden);
      CHECK(r.step.executed_tests <= 1);
      if (r.decision.candidates > 0) break;
    }
    CHECK(e.state().budget == 50);
    if (!e.done()) CHECK(e.step().decision.budget == 50);
    StepOverride neg;
    neg.budget = -1;
    if (!e.done()) CHECK_THROWS_AS(e.step(neg), ParameterError);
  }

  TEST_CASE("multiplier override must lie in range") {
    const auto cfg = small_system(5);
    Engine e(cfg, 3, binding(PolicyKind::kBinMQr, cfg));
    StepOverride ov;
    ov.multiplier = 9.0;
    CHECK_THROWS_AS(e.step(ov), ParameterError);
    ov.multiplier = 0.1;
    CHECK_THROWS_AS(e.step(ov), ParameterError);
    ov.multiplier = 2.0;
    const auto r = e.step(ov);
    CHECK(r.decision.multiplier == 2.0);
    CHECK(r.decision.demand_evaluations == (r.decision.candidates > 0 ? 1 : 0));
  }

  TEST_CASE("binary search equals fixed m = 1 under a slack budget") {
    const auto cfg = small_system(1000);
    Engine a(cfg, 8, binding(PolicyKind::kBinMQr, cfg));
    auto fixed = binding(PolicyKind::kFixedMQr, cfg);
    fixed.fixed_m = 1.0;
    Engine b(cfg, 8, fixed);
    const auto ta = play(a), tb = play(b);
    CHECK(ta.tests == tb.tests);
    CHECK(ta.multipliers == tb.multipliers);
    CHECK(ta.s1 == tb.s1);
    CHECK(ta.s2 == tb.s2);
    CHECK(ta.s3 == tb.s3);
  }

  TEST_CASE("binary search spends at most search_iters evaluations") {
    const auto cfg = small_system(2);
    auto b = binding(PolicyKind::kBinMQr, cfg);
    b.search_iters = 12;
    Engine e(cfg, 4, b);
    while (!e.done()) {
      const auto r = e.step();
      CHECK(r.decision.demand_evaluations <= 12);
      CHECK(r.decision.multiplier >= 1.0);
    }
    b.search_iters = 1;
    CHECK_THROWS_AS(b.validate(), ParameterError);
  }

  TEST_CASE("fixed multiplier spends one pass per decision step") {
    const auto cfg = small_system(2);
    Engine e(cfg, 4, binding(PolicyKind::kFixedMQr, cfg));
    while (!e.done()) {
      const auto r = e.step();
      CHECK(r.decision.demand_evaluations == (r.decision.candidates > 0 ? 1 : 0));
    }
  }

  TEST_CASE("stepping past the end fails") {
    const auto cfg = small_system(3);
    Engine e(cfg, 1, binding(PolicyKind::kThresAvgRand, cfg), false);
    play(e);
    CHECK_THROWS_AS(e.step(), StateError);
  }

  TEST_CASE("missing estimator is rejected") {
    PolicyBinding b;
    b.kind = PolicyKind::kBinMQr;
    CHECK_THROWS_AS(b.validate(), ParameterError);
    b.kind = PolicyKind::kSympAvgRand;
    CHECK_NOTHROW(b.validate());
  }

  TEST_CASE("recorded observations carry the applied cost") {
    const auto cfg = small_system(3);
    Engine e(cfg, 2, binding(PolicyKind::kBinMQr, cfg), true);
    bool seen = false;
    while (!e.done()) {
      const auto r = e.step();
      for (const auto& ind : r.individuals) {
        CHECK(ind.obs[kAlpha3Slot] == doctest::Approx(r.decision.multiplier * cfg.alpha3_true));
        seen = true;
      }
    }
    CHECK(seen);
  }
}
