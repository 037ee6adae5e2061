#include <cmath>

#include "doctest.h"
#include "outbreak/errors.hpp"
#include "outbreak/harness.hpp"
#include "outbreak/ppo.hpp"

using namespace outbreak;

namespace {

PpoConfig tiny() {
  PpoConfig c;
  c.n_parallel_envs = 2;
  c.rollout_len = 16;
  c.minibatch = 16;
  c.epochs = 2;
  c.total_steps = 96;
  c.seed = 3;
  return c;
}

SystemConfig tiny_system() {
  SystemConfig s = desk_system();
  s.n_clusters = 3;
  s.stagger_window = 4;
  s.epi.cluster_size_max = 5;
  s.budget = 3;
  return s;
}

}  // namespace

TEST_SUITE("ppo") {
  TEST_CASE("config validation and json") {
    PpoConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.clip == 0.10);
    CHECK(c.gae_lambda == 0.90);
    c.m_min = 5.0;
    CHECK_THROWS_AS(c.validate(), ParameterError);
    c = PpoConfig{};
    c.gamma = 1.0;
    CHECK_THROWS_AS(c.validate(), ParameterError);
    c = tiny();
    c.entropy_coef = 0.02;
    CHECK(to_json(ppo_config_from_json(to_json(c))) == to_json(c));
  }

  TEST_CASE("tiny training run is deterministic and finite") {
    const auto sys = tiny_system();
    auto est = std::make_shared<AnalyticEstimator>(std::make_shared<const LatentModel>(sys.epi), sys.alpha2);
    int calls = 0;
    const auto a = ppo_train(tiny(), sys, est, [&](const PpoStats&) { ++calls; });
    const auto b = ppo_train(tiny(), sys, est);
    CHECK(calls == a.stats.iterations);
    CHECK(a.stats.steps >= 96);
    CHECK(a.stats.iterations == 3);
    CHECK(a.policy->theta() == b.policy->theta());
    CHECK(a.policy->theta().allFinite());
    CHECK(std::isfinite(a.stats.last_value_loss));
    const auto back = ppo_from_checkpoint(make_checkpoint(*a.policy, to_json(tiny()), a.rng_state));
    CHECK(back->theta() == a.policy->theta());
    CHECK_THROWS_AS(ppo_train(tiny(), sys, nullptr), ParameterError);
  }
}
