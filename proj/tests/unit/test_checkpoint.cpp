#include <cstdio>
#include <bit>
#include <limits>
#include <random>

#include "doctest.h"
#include "outbreak/checkpoint.hpp"
#include "outbreak/errors.hpp"
#include "outbreak/ppo.hpp"

using namespace outbreak;
using nlohmann::json;

TEST_SUITE("checkpoint") {
  TEST_CASE("theta hex encoding is bit exact") {
    nn::Vec t(6);
    t << 0.1, -0.0, 1e-310, std::numeric_limits<double>::max(), -3.25, 1.0 / 3.0;
    const auto back = decode_theta(encode_theta(t));
    REQUIRE(back.size() == t.size());
    for (int i = 0; i < t.size(); ++i) {
      CHECK(std::bit_cast<std::uint64_t>(back[i]) == std::bit_cast<std::uint64_t>(t[i]));
    }
    CHECK_THROWS_AS(decode_theta("abc"), InputError);
    CHECK_THROWS_AS(decode_theta("zzzzzzzzzzzzzzzz"), InputError);
  }

  TEST_CASE("learned estimator round trip through a file") {
    LearnedSpec spec;
    spec.hidden = 12;
    spec.alpha3_max = 0.2;
    LearnedEstimator est(spec);
    std::mt19937_64 rng(77);
    est.net().init(est.theta(), rng);
    const std::string path = "ckpt_test_tmp.json";
    save_checkpoint(path, make_checkpoint(est, json{{"seed", 5}}, "state"));
    const auto ck = load_checkpoint(path);
    std::remove(path.c_str());
    CHECK(ck.backend == "learned-q");
    CHECK(ck.train_config.at("seed") == 5);
    CHECK(ck.rng_state == "state");
    const auto back = estimator_from_checkpoint(ck);
    CHECK(back.theta() == est.theta());
    CHECK(back.spec().hidden == 12);
    CHECK(back.spec().alpha3_max == 0.2);
    LocalObs o;
    o[0] = 0.3;
    o[kAlpha3Slot] = 0.05;
    CHECK(back.delta_q(o, nullptr) == est.delta_q(o, nullptr));
  }

  TEST_CASE("malformed documents are rejected") {
    LearnedEstimator est(LearnedSpec{});
    const json good = to_json(make_checkpoint(est));
    json j = good;
    j["format"] = "other";
    CHECK_THROWS_AS(checkpoint_from_json(j), InputError);
    j = good;
    j["version"] = 99;
    CHECK_THROWS_AS(checkpoint_from_json(j), InputError);
    j = good;
    j["num_params"] = 3;
    CHECK_THROWS_AS(checkpoint_from_json(j), InputError);
    j = good;
    j.erase("theta_hex");
    CHECK_THROWS_AS(checkpoint_from_json(j), InputError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ck.json"), InputError);
    auto ck = checkpoint_from_json(good);
    ck.backend = "hier-ppo";
    CHECK_THROWS_AS(estimator_from_checkpoint(ck), InputError);
    ck = checkpoint_from_json(good);
    ck.theta.conservativeResize(ck.theta.size() - 1);
    CHECK_THROWS_AS(estimator_from_checkpoint(ck), InputError);
  }

  TEST_CASE("PPO policy round trip") {
    PpoNetSpec spec;
    spec.encoder_hidden = 8;
    spec.trunk_hidden = 10;
    spec.range = {0.5, 3.0};
    PpoPolicy p(spec);
    std::mt19937_64 rng(3);
    p.init(rng);
    const auto ck = checkpoint_from_json(to_json(make_checkpoint(p)));
    CHECK(ck.backend == "hier-ppo");
    const auto back = ppo_from_checkpoint(ck);
    CHECK(back->theta() == p.theta());
    CHECK(back->spec().range.m_min == 0.5);
    CHECK(back->spec().range.m_max == 3.0);
    LearnedEstimator est(LearnedSpec{});
    CHECK_THROWS_AS(ppo_from_checkpoint(make_checkpoint(est)), InputError);
  }
}
