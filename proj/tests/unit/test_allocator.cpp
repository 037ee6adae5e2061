#include <algorithm>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "outbreak/allocator.hpp"
#include "outbreak/errors.hpp"

using namespace outbreak;

TEST_SUITE("allocator") {
  TEST_CASE("worked example") {
    const std::vector<CandidateAction> c = {{0, 0, 0.5}, {0, 1, -0.1}, {1, 0, 0.2}, {1, 1, 0.05}};
    const auto a = q_rank_allocate(c, 2);
    CHECK(a.test == std::vector<std::uint8_t>{1, 0, 1, 0});
    CHECK(a.positives == 3);
    CHECK(a.executed == 2);
    CHECK(a.candidates == 4);
    REQUIRE(a.selected.size() == 2);
    CHECK(a.selected[0].delta_q == 0.5);
    CHECK(a.selected[1].delta_q == 0.2);
    const auto all = q_rank_allocate(c, 10);
    CHECK(all.executed == 3);
    CHECK(all.test == std::vector<std::uint8_t>{1, 0, 1, 1});
  }

  TEST_CASE("non-positive values are never tested") {
    const std::vector<CandidateAction> c = {{0, 0, 0.0}, {0, 1, -0.1}, {2, 0, -1e-12}};
    const auto a = q_rank_allocate(c, 5);
    CHECK(a.executed == 0);
    CHECK(a.positives == 0);
    CHECK(std::count(a.test.begin(), a.test.end(), 1) == 0);
    CHECK(q_rank_allocate({}, 3).executed == 0);
  }

  TEST_CASE("errors") {
    const std::vector<CandidateAction> dup = {{1, 2, 0.3}, {0, 0, 0.1}, {1, 2, 0.4}};
    CHECK_THROWS_AS(q_rank_allocate(dup, 1), InputError);
    const std::vector<CandidateAction> ok = {{0, 0, 0.1}};
    CHECK_THROWS_AS(q_rank_allocate(ok, -1), ParameterError);
  }

  TEST_CASE("matches exhaustive search on random instances") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> nd(0, 10), bd(0, 6), vd(-4, 6), cd(0, 3);
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = nd(rng);
      const int b = bd(rng);
      std::vector<CandidateAction> c;
      std::vector<std::pair<std::pair<int, int>, double>> items;
      std::vector<int> next(4, 0);
      for (int i = 0; i < n; ++i) {
        const int cl = cd(rng);
        // Quarter steps make ties frequent and sums exact.
        const double v = vd(rng) / 4.0;
        c.push_back({cl, next[static_cast<std::size_t>(cl)]++, v});
        items.push_back({{cl, c.back().individual_id}, v});
      }
      std::shuffle(c.begin(), c.end(), rng);
      const auto a = q_rank_allocate(c, b);
      std::vector<std::pair<int, int>> got;
      for (const auto& s : a.selected) got.push_back({s.cluster_id, s.individual_id});
      std::sort(got.begin(), got.end());
      CHECK(got == oracle::best_subset(items, b));
      CHECK(a.executed <= b);
      int flagged = 0;
      for (auto t : a.test) flagged += t;
      CHECK(flagged == a.executed);
    }
  }

  TEST_CASE("order invariance") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<CandidateAction> c;
    for (int k = 0; k < 30; ++k) c.push_back({k % 5, k / 5, std::round(u(rng) * 8) / 8});
    auto ref = q_rank_allocate(c, 7).selected;
    for (int trial = 0; trial < 20; ++trial) {
      std::shuffle(c.begin(), c.end(), rng);
      const auto s = q_rank_allocate(c, 7).selected;
      REQUIRE(s.size() == ref.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s[i].cluster_id == ref[i].cluster_id);
        CHECK(s[i].individual_id == ref[i].individual_id);
      }
    }
  }

  TEST_CASE("positive demand counts strictly positive values") {
    const std::vector<double> v = {0.1, 0.0, -0.2, 3.0, 1e-300};
    CHECK(positive_demand(v) == 3);
  }
}
