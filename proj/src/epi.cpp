#include "outbreak/epi.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "outbreak/errors.hpp"

namespace outbreak {
namespace {

void require_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ParameterError(std::string(name) + " must lie in [0,1], got " + std::to_string(p));
  }
}

double lognormal_cdf(double x, double mu, double sigma) {
  if (x <= 0.0) return 0.0;
  return 0.5 * std::erfc(-(std::log(x) - mu) / (sigma * std::sqrt(2.0)));
}

}  // namespace

void EpiParams::validate() const {
  require_probability(base_transmission_prob, "base_transmission_prob");
  require_probability(p_symptomatic_given_infected, "p_symptomatic_given_infected");
  require_probability(p_false_symptom_per_day, "p_false_symptom_per_day");
  require_probability(p_high_transmissive_index, "p_high_transmissive_index");
  require_probability(test_sensitivity, "test_sensitivity");
  require_probability(test_specificity, "test_specificity");
  if (!(incubation_mean_days > 0.0)) throw ParameterError("incubation_mean_days must be > 0");
  if (!(incubation_std_days > 0.0)) throw ParameterError("incubation_std_days must be > 0");
  if (!(infectiousness_multiplier >= 0.0)) {
    throw ParameterError("infectiousness_multiplier must be >= 0");
  }
  if (infectious_pre_onset_days < 0 || infectious_post_onset_days < 1) {
    throw ParameterError("infectious window must satisfy pre >= 0 and post >= 1");
  }
  if (tracing_delay_days < 0) throw ParameterError("tracing_delay_days must be >= 0");
  if (result_delay_days < 1) throw ParameterError("result_delay_days must be >= 1");
  if (cluster_size_min < 2) throw ParameterError("cluster_size_min must be >= 2");
  if (cluster_size_max < cluster_size_min) {
    throw ParameterError("cluster_size_max must be >= cluster_size_min");
  }
  if (episode_days < 1 || episode_days > 0xFFFF) throw ParameterError("episode_days out of range");
  if (decision_start_day < 0 || decision_start_day >= episode_days) {
    throw ParameterError("decision_start_day must lie in [0, episode_days)");
  }
}

double EpiParams::exposure_prob(bool high_transmissive_index) const {
  const double p = base_transmission_prob *
                   (high_transmissive_index ? infectiousness_multiplier : 1.0);
  return std::min(1.0, p);
}

double EpiParams::lognormal_sigma() const {
  const double cv = incubation_std_days / incubation_mean_days;
  return std::sqrt(std::log1p(cv * cv));
}

double EpiParams::lognormal_mu() const {
  const double s = lognormal_sigma();
  return std::log(incubation_mean_days) - 0.5 * s * s;
}

std::vector<double> onset_offset_pmf(const EpiParams& epi) {
  const int cap = epi.onset_cap();
  const double mu = epi.lognormal_mu();
  const double sigma = epi.lognormal_sigma();
  std::vector<double> pmf(static_cast<std::size_t>(cap) + 1, 0.0);
  double prev = 0.0;
  for (int k = 0; k < cap; ++k) {
    const double upper = lognormal_cdf(k + 0.5, mu, sigma);
    pmf[static_cast<std::size_t>(k)] = upper - prev;
    prev = upper;
  }
  pmf[static_cast<std::size_t>(cap)] = 1.0 - prev;
  return pmf;
}

int onset_offset_from_incubation(const EpiParams& epi, double incubation_days) {
  const double r = std::floor(incubation_days + 0.5);
  if (r >= epi.onset_cap()) return epi.onset_cap();
  return std::max(0, static_cast<int>(r));
}

bool infectious_on(const EpiParams& epi, int infection_day, int onset_day, int day) {
  const int start = std::max(infection_day, onset_day - epi.infectious_pre_onset_days);
  return day >= start && day < onset_day + epi.infectious_post_onset_days;
}

bool true_symptom_on(const EpiParams& epi, bool symptomatic, int onset_day, int day) {
  return symptomatic && day >= onset_day && day < onset_day + epi.infectious_post_onset_days;
}

}  // namespace outbreak
