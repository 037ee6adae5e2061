#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "outbreak/epi.hpp"
#include "outbreak/errors.hpp"

using namespace outbreak;

TEST_SUITE("epi") {
  TEST_CASE("log-normal parameters reproduce the configured mean and std") {
    EpiParams e;
    const double mu = e.lognormal_mu();
    const double s = e.lognormal_sigma();
    const double mean = std::exp(mu + 0.5 * s * s);
    const double var = (std::exp(s * s) - 1.0) * std::exp(2.0 * mu + s * s);
    CHECK(mean == doctest::Approx(1.57).epsilon(1e-12));
    CHECK(std::sqrt(var) == doctest::Approx(0.65).epsilon(1e-12));
  }

  TEST_CASE("onset pmf matches an independent erfc evaluation") {
    EpiParams e;
    const auto pmf = onset_offset_pmf(e);
    const auto ref = oracle::onset_pmf(1.57, 0.65, e.onset_cap());
    REQUIRE(pmf.size() == ref.size());
    double total = 0.0;
    for (std::size_t k = 0; k < pmf.size(); ++k) {
      CHECK(pmf[k] == doctest::Approx(ref[k]).epsilon(1e-12));
      total += pmf[k];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("incubation rounding clamps to the cap") {
    EpiParams e;
    CHECK(onset_offset_from_incubation(e, 0.2) == 0);
    CHECK(onset_offset_from_incubation(e, 0.5) == 1);
    CHECK(onset_offset_from_incubation(e, 1.49) == 1);
    CHECK(onset_offset_from_incubation(e, 1e6) == e.onset_cap());
  }

  TEST_CASE("infectious window spans two days before onset to five after") {
    EpiParams e;
    CHECK_FALSE(infectious_on(e, 0, 4, 1));
    CHECK(infectious_on(e, 0, 4, 2));
    CHECK(infectious_on(e, 0, 4, 8));
    CHECK_FALSE(infectious_on(e, 0, 4, 9));
    // Never before infection.
    CHECK_FALSE(infectious_on(e, 3, 4, 2));
    CHECK(true_symptom_on(e, true, 4, 4));
    CHECK_FALSE(true_symptom_on(e, true, 4, 3));
    CHECK_FALSE(true_symptom_on(e, false, 4, 5));
  }

  TEST_CASE("exposure probability saturates at one") {
    EpiParams e;
    CHECK(e.exposure_prob(false) == doctest::Approx(0.03));
    CHECK(e.exposure_prob(true) == doctest::Approx(0.03 * 24.4));
    e.base_transmission_prob = 0.1;
    CHECK(e.exposure_prob(true) == 1.0);
  }

  TEST_CASE("validation rejects out-of-domain parameters") {
    EpiParams e;
    CHECK_NOTHROW(e.validate());
    auto bad = e;
    bad.test_sensitivity = 1.5;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = e;
    bad.incubation_mean_days = 0.0;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = e;
    bad.cluster_size_min = 1;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = e;
    bad.decision_start_day = 30;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
  }
}
