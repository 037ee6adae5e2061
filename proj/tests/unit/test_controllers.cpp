#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "outbreak/controllers.hpp"
#include "outbreak/errors.hpp"

using namespace outbreak;

namespace {

GlobalObs random_global(std::mt19937_64& rng, int n_max, int active) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GlobalObs g;
  g.n_max = n_max;
  g.values.assign(static_cast<std::size_t>(kGlobalDim + kClusterDim * n_max), 0.0);
  g.block_cluster.assign(static_cast<std::size_t>(n_max), -1);
  for (int k = 0; k < kGlobalDim; ++k) g.values[static_cast<std::size_t>(k)] = u(rng);
  for (int b = 0; b < active; ++b) {
    g.block_cluster[static_cast<std::size_t>(b)] = 2 * b;
    for (int j = 0; j < kClusterDim - 1; ++j) {
      g.values[static_cast<std::size_t>(kGlobalDim + b * kClusterDim + j)] = u(rng);
    }
    g.values[static_cast<std::size_t>(kGlobalDim + b * kClusterDim + kClusterDim - 1)] = 1.0;
  }
  return g;
}

}  // namespace

TEST_SUITE("controllers") {
  TEST_CASE("fixed multiplier") {
    MultiplierRange r;
    CHECK(fixed_m(1.0, r) == 1.0);
    CHECK(fixed_m(0.25, r) == 0.25);
    CHECK(fixed_m(4.0, r) == 4.0);
    CHECK_THROWS_AS(fixed_m(4.01, r), ParameterError);
    CHECK_THROWS_AS(fixed_m(0.1, r), ParameterError);
    MultiplierRange bad{2.0, 1.0};
    CHECK_THROWS_AS(bad.validate(), ParameterError);
  }

  TEST_CASE("binary search short-circuits when m = 1 fits") {
    int calls = 0;
    const auto r = bin_search_m([&](double) { ++calls; return 10; }, 40, MultiplierRange{});
    CHECK(r.m == 1.0);
    CHECK(r.evaluations == 1);
    CHECK(calls == 1);
  }

  TEST_CASE("binary search converges on a demand step") {
    MultiplierRange range;
    int calls = 0;
    const auto r = bin_search_m([&](double m) { ++calls; return m < 2.0 ? 100 : 10; }, 40, range, 30);
    CHECK(r.evaluations == 30);
    CHECK(calls == 30);
    CHECK(r.m >= 2.0);
    CHECK(r.m - 2.0 <= (range.m_max - range.m_min) / std::pow(2.0, 30));
  }

  TEST_CASE("binary search corner cases") {
    MultiplierRange range;
    int calls = 0;
    const auto zero = bin_search_m([&](double) { ++calls; return 5; }, 0, range);
    CHECK(zero.m == range.m_max);
    CHECK(zero.evaluations == 0);
    CHECK(calls == 0);
    // Demand that never fits ends at m_max.
    const auto never = bin_search_m([](double) { return 1000; }, 3, range, 12);
    CHECK(never.m == range.m_max);
    CHECK(never.evaluations == 12);
    CHECK_THROWS_AS(bin_search_m([](double) { return 0; }, 1, range, 0), ParameterError);
  }

  TEST_CASE("binary search result is feasible for monotone demand") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.5, 30.0);
    MultiplierRange range;
    for (int trial = 0; trial < 200; ++trial) {
      const double scale = u(rng);
      auto demand = [&](double m) { return static_cast<int>(std::floor(scale * 40.0 / (m * m))); };
      const int b = 1 + trial % 40;
      const auto r = bin_search_m(demand, b, range);
      if (demand(range.m_max) <= b) {
        CHECK(demand(r.m) <= b);
      }
      CHECK(r.m >= 1.0);
      CHECK(r.m <= range.m_max);
    }
  }

  TEST_CASE("sigmoid multiplier map") {
    PpoPolicy p;
    const auto& r = p.spec().range;
    CHECK(p.multiplier(0.0) == doctest::Approx(0.5 * (r.m_min + r.m_max)).epsilon(1e-15));
    CHECK(p.multiplier(40.0) == doctest::Approx(r.m_max).epsilon(1e-12));
    CHECK(p.multiplier(-40.0) == doctest::Approx(r.m_min).epsilon(1e-12));
    CHECK(p.multiplier(1.0) > p.multiplier(0.5));
  }

  TEST_CASE("clipped surrogate example") {
    const std::vector<double> ratios = {0.8, 1.0, 1.3};
    const std::vector<double> adv = {1.0, -1.0, 1.0};
    CHECK(clipped_surrogate_loss(ratios, adv, 0.1) == doctest::Approx(-0.3).epsilon(1e-14));
    CHECK_THROWS_AS(clipped_surrogate_loss(ratios, std::vector<double>{1.0}, 0.1), ParameterError);
  }

  TEST_CASE("gaussian log density") {
    CHECK(gaussian_log_prob(0.0, 0.0, 0.0) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
    CHECK(gaussian_log_prob(1.5, 0.5, std::log(2.0)) ==
          doctest::Approx(-0.125 - std::log(2.0) - 0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
  }

  TEST_CASE("generalized advantage estimation") {
    const std::vector<double> r = {1.0, 0.5, -1.0};
    const std::vector<double> v = {0.2, 0.1, 0.4};
    const std::vector<std::uint8_t> d = {0, 1, 0};
    std::vector<double> adv, ret;
    const double g = 0.9, l = 0.8, last = 0.7;
    compute_gae(r, v, d, last, g, l, adv, ret);
    const double d2 = -1.0 + g * last - 0.4;
    const double d1 = 0.5 - 0.1;  // terminal
    const double d0 = 1.0 + g * 0.1 - 0.2;
    CHECK(adv[2] == doctest::Approx(d2).epsilon(1e-15));
    CHECK(adv[1] == doctest::Approx(d1).epsilon(1e-15));
    CHECK(adv[0] == doctest::Approx(d0 + g * l * d1).epsilon(1e-15));
    for (int t = 0; t < 3; ++t) CHECK(ret[static_cast<std::size_t>(t)] == doctest::Approx(adv[static_cast<std::size_t>(t)] + v[static_cast<std::size_t>(t)]));
    CHECK_THROWS_AS(compute_gae(r, std::vector<double>{0.0}, d, 0, g, l, adv, ret), ParameterError);
  }

  TEST_CASE("running moments merge batches") {
    RunningMoments m;
    const std::vector<double> a = {1, 2, 3, 4}, b = {10, -2}, c = {0.5};
    m.update(a);
    m.update(b);
    m.update(c);
    const std::vector<double> all = {1, 2, 3, 4, 10, -2, 0.5};
    double mean = 0;
    for (double x : all) mean += x;
    mean /= all.size();
    double var = 0;
    for (double x : all) var += (x - mean) * (x - mean);
    var /= all.size();
    CHECK(m.count == 7.0);
    CHECK(m.mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(m.variance() == doctest::Approx(var).epsilon(1e-13));
    RunningMoments empty;
    CHECK(empty.variance() == 1.0);
  }

  TEST_CASE("policy is permutation invariant and counts evaluations") {
    std::mt19937_64 rng(9);
    PpoPolicy p;
    p.init(rng);
    auto g = random_global(rng, 5, 3);
    const double m0 = p.decide(g);
    CHECK(p.evaluation_count == 1);
    // Swap two active blocks.
    for (int j = 0; j < kClusterDim; ++j) {
      std::swap(g.values[static_cast<std::size_t>(kGlobalDim + j)],
                g.values[static_cast<std::size_t>(kGlobalDim + 2 * kClusterDim + j)]);
    }
    CHECK(p.decide(g) == doctest::Approx(m0).epsilon(1e-13));
    CHECK(p.decide(g) == p.decide(g));
    CHECK(p.evaluation_count == 4);
    const double m = p.decide(g);
    CHECK(m >= p.spec().range.m_min);
    CHECK(m <= p.spec().range.m_max);
  }

  TEST_CASE("PPO loss gradient matches finite differences") {
    std::mt19937_64 rng(21);
    PpoNetSpec spec;
    spec.encoder_hidden = 6;
    spec.trunk_hidden = 8;
    PpoPolicy p(spec);
    p.init(rng);
    std::vector<GlobalObs> obs;
    for (int i = 0; i < 6; ++i) obs.push_back(random_global(rng, 4, i % 4));
    std::normal_distribution<double> nd(0.0, 1.0);
    PpoPolicy::Batch batch;
    for (auto& o : obs) {
      const auto out = p.evaluate(o);
      const double u = out.mean_u + std::exp(out.log_std) * nd(rng);
      batch.obs.push_back(&o);
      batch.actions.push_back(u);
      batch.old_log_probs.push_back(gaussian_log_prob(u, out.mean_u, out.log_std) + 0.05 * nd(rng));
      batch.advantages.push_back(nd(rng));
      batch.returns.push_back(nd(rng));
    }
    const double clip = 0.2, vc = 0.5, ec = 0.01;
    auto loss = [&](const PpoPolicy& q) {
      nn::Vec g;
      const auto st = q.loss_and_grad(batch, clip, vc, ec, g);
      return st.policy_loss + vc * st.value_loss - ec * st.entropy;
    };
    nn::Vec grad;
    p.loss_and_grad(batch, clip, vc, ec, grad);
    const double h = 1e-6;
    for (int j = 0; j < p.num_params(); j += std::max(1, p.num_params() / 60)) {
      PpoPolicy up = p, down = p;
      up.theta()[j] += h;
      down.theta()[j] -= h;
      const double fd = (loss(up) - loss(down)) / (2 * h);
      CHECK(std::abs(grad[j] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
    PpoPolicy up = p, down = p;
    const int last = p.num_params() - 1;
    up.theta()[last] += h;
    down.theta()[last] -= h;
    CHECK(grad[last] == doctest::Approx((loss(up) - loss(down)) / (2 * h)).epsilon(1e-5));
  }
}
