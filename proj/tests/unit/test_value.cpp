#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "outbreak/errors.hpp"
#include "outbreak/value.hpp"

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

oracle::History random_history(std::mt19937_64& rng, int day) {
  std::bernoulli_distribution sym(0.15), tested(0.3), positive(0.4);
  oracle::History h;
  for (int d = 0; d <= day; ++d) h.symptoms.push_back(sym(rng));
  for (int d = 0; d <= day; ++d) h.results.push_back(tested(rng) ? static_cast<int>(positive(rng)) : -1);
  return h;
}

EpiParams small_epi() {
  EpiParams e;
  e.episode_days = 5;
  e.decision_start_day = 1;
  e.cluster_size_max = 4;
  return e;
}

LocalObs random_obs(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LocalObs o;
  for (int k = 0; k < 9; ++k) o[k] = u(rng);
  for (int k = 9; k < 12; ++k) o[k] = u(rng) < 0.3 ? 1.0 : 0.0;
  for (int k = 12; k < 15; ++k) o[k] = o[k - 3] == 1.0 ? (u(rng) < 0.5 ? 1.0 : 0.0) : -1.0;
  o[kAlpha3Slot] = 0.1 * u(rng);
  return o;
}

}  // namespace

TEST_SUITE("value") {
  TEST_CASE("certainly uninfected contact is worth exactly minus the cost") {
    EpiParams e;
    auto model = std::make_shared<const LatentModel>(e);
    AnalyticEstimator est(model, 0.1);
    std::vector<double> w(static_cast<std::size_t>(model->num_states()), 0.0);
    w[0] = 1.0;
    BeliefContext ctx{w, 5};
    LocalObs o;
    o[kAlpha3Slot] = 0.05;
    CHECK(est.delta_q(o, &ctx) == -0.05);
    CHECK(est.delta_q(o, nullptr) == -0.05);
  }

  TEST_CASE("free tests are never harmful and the cost shifts linearly") {
    EpiParams e;
    auto model = std::make_shared<const LatentModel>(e);
    AnalyticEstimator est(model, 0.1);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const int day = 3 + trial % 5;
      std::vector<ObservationHistory> hs = {to_library(random_history(rng, day), day, e)};
      const auto b = posterior(*model, hs, day);
      BeliefContext ctx{b.weights[0], day};
      LocalObs o;
      o[kAlpha3Slot] = 0.0;
      const double free = est.delta_q(o, &ctx);
      CHECK(free >= 0.0);
      for (double a3 : {0.01, 0.05, 0.2}) {
        o[kAlpha3Slot] = a3;
        CHECK(est.delta_q(o, &ctx) == doctest::Approx(free - a3).epsilon(1e-15));
      }
      const auto q = est.q_values(o, &ctx);
      CHECK(q[1] - q[0] == doctest::Approx(est.delta_q(o, &ctx)).epsilon(1e-12));
    }
  }

  TEST_CASE("single-contact value of information matches joint enumeration") {
    const EpiParams e = small_epi();
    auto model = std::make_shared<const LatentModel>(e);
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
      const int day = 1 + trial % 3;
      const auto h = random_history(rng, day);
      for (int horizon : {1, 3, 7}) {
        AnalyticEstimator est(model, 0.1, horizon);
        std::vector<ObservationHistory> hs = {to_library(h, day, e)};
        const auto b = posterior(*model, hs, day);
        BeliefContext ctx{b.weights[0], day};
        const double without = oracle::expected_cost_with_test(e, {h}, day, 0.1, -1, horizon);
        const double with = oracle::expected_cost_with_test(e, {h}, day, 0.1, 0, horizon);
        CHECK(std::abs(est.information_value(LocalObs{}, &ctx) - (without - with)) < 1e-12);
      }
    }
  }

  TEST_CASE("four-contact toy: the top-ranked test matches the joint oracle") {
    const EpiParams e = small_epi();
    auto model = std::make_shared<const LatentModel>(e);
    AnalyticEstimator est(model, 0.1, 7);
    std::mt19937_64 rng(29);
    int informative = 0;
    for (int trial = 0; trial < 8; ++trial) {
      const int day = 1 + trial % 2;
      std::vector<oracle::History> hs;
      std::vector<ObservationHistory> lib;
      for (int i = 0; i < 4; ++i) {
        hs.push_back(random_history(rng, day));
        lib.push_back(to_library(hs.back(), day, e));
      }
      const auto b = posterior(*model, lib, day);
      const double base = oracle::expected_cost_with_test(e, hs, day, 0.1, -1, 7);
      std::vector<double> analytic, joint;
      for (int i = 0; i < 4; ++i) {
        BeliefContext ctx{b.weights[static_cast<std::size_t>(i)], day};
        analytic.push_back(est.information_value(LocalObs{}, &ctx));
        joint.push_back(base - oracle::expected_cost_with_test(e, hs, day, 0.1, i, 7));
        // The joint value also counts what the result reveals about the index
        // case, so it is never smaller.
        CHECK(joint.back() >= analytic.back() - 1e-12);
      }
      const auto best_a = std::max_element(analytic.begin(), analytic.end()) - analytic.begin();
      const auto best_j = std::max_element(joint.begin(), joint.end()) - joint.begin();
      if (joint[static_cast<std::size_t>(best_j)] <= 1e-9) continue;
      ++informative;
      // Contacts with identical histories tie exactly; any maximizer will do.
      CHECK(joint[static_cast<std::size_t>(best_a)] >= joint[static_cast<std::size_t>(best_j)] - 1e-12);
    }
    CHECK(informative > 3);
  }

  TEST_CASE("constructor validation") {
    auto model = std::make_shared<const LatentModel>(EpiParams{});
    CHECK_THROWS_AS(AnalyticEstimator(model, -0.1), ParameterError);
    CHECK_THROWS_AS(AnalyticEstimator(nullptr, 0.1), ParameterError);
    CHECK_THROWS_AS(AnalyticEstimator(model, 0.1, 0), ParameterError);
  }

  TEST_CASE("hinge penalty") {
    CHECK(hinge_penalty(-2.0, -1.0) == 0.0);
    CHECK(hinge_penalty(-1.0, -1.0) == 0.0);
    CHECK(hinge_penalty(0.5, -1.0) == 2.25);
    CHECK(hinge_penalty(0.0, 0.0) == 0.0);
  }

  TEST_CASE("exact alpha3 partials match finite differences") {
    LearnedSpec spec;
    spec.hidden = 16;
    LearnedEstimator est(spec);
    std::mt19937_64 rng(5);
    est.net().init(est.theta(), rng);
    std::vector<LocalObs> obs;
    std::vector<int> actions;
    for (int i = 0; i < 100; ++i) {
      obs.push_back(random_obs(rng));
      actions.push_back(i % 2);
    }
    const auto exact = est.alpha3_partials(obs, actions);
    const auto fd = est.alpha3_partials_fd(obs, actions, 1e-5);
    for (std::size_t i = 0; i < obs.size(); ++i) {
      CHECK(std::abs(exact[i] - fd[i]) <= 1e-4 * std::max(1.0, std::abs(fd[i])));
    }
    CHECK(grad_penalty(est, obs, actions, -1.0) ==
          doctest::Approx(grad_penalty_fd(est, obs, actions, -1.0, 1e-5)).epsilon(1e-4));
  }

  TEST_CASE("gradient penalty parameter gradient matches finite differences") {
    LearnedSpec spec;
    spec.hidden = 8;
    LearnedEstimator est(spec);
    std::mt19937_64 rng(8);
    est.net().init(est.theta(), rng);
    std::vector<LocalObs> obs;
    std::vector<int> actions;
    for (int i = 0; i < 20; ++i) {
      obs.push_back(random_obs(rng));
      actions.push_back(i % 2);
    }
    const double target = -5.0;
    const auto x = est.encode_batch(obs);
    nn::Vec grad = nn::Vec::Zero(est.theta().size());
    const double penalty = accumulate_grad_penalty(est, x, actions, target, 1.0, grad);
    CHECK(penalty > 0.0);
    CHECK(penalty == doctest::Approx(grad_penalty(est, obs, actions, target)).epsilon(1e-12));
    const double h = 1e-6;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(est.theta().size()) - 1);
    for (int k = 0; k < 25; ++k) {
      const int j = pick(rng);
      const double keep = est.theta()[j];
      est.theta()[j] = keep + h;
      const double up = grad_penalty(est, obs, actions, target);
      est.theta()[j] = keep - h;
      const double down = grad_penalty(est, obs, actions, target);
      est.theta()[j] = keep;
      const double fd = (up - down) / (2 * h);
      CHECK(std::abs(grad[j] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }

  TEST_CASE("joint variant appends the scaled alpha2 input") {
    LearnedSpec spec;
    spec.include_alpha2 = true;
    spec.alpha2 = 0.3;
    LearnedEstimator est(spec);
    CHECK(est.input_dim() == 17);
    LocalObs o;
    o[kAlpha3Slot] = 0.05;
    nn::Vec x(17);
    est.encode(o, -1.0, x);
    CHECK(x[kAlpha3Slot] == doctest::Approx(0.5));
    CHECK(x[kAlpha2Slot] == doctest::Approx(3.0));
    est.encode(o, 0.2, x);
    CHECK(x[kAlpha2Slot] == doctest::Approx(2.0));
  }
}
