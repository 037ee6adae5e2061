#include "outbreak/belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "outbreak/errors.hpp"

namespace outbreak {

LatentModel::LatentModel(const EpiParams& epi) : epi_(epi) {
  epi_.validate();
  const int cap = epi_.onset_cap();
  num_states_ = 1 + 2 * (cap + 1);
  const auto n = static_cast<std::size_t>(num_states_);
  prior_.assign(n, 0.0);
  onset_.assign(n, 0);
  inf_begin_.assign(n, 0);
  inf_end_.assign(n, 0);
  const auto pmf = onset_offset_pmf(epi_);
  for (int k = 0; k <= cap; ++k) {
    for (int s = 0; s < 2; ++s) {
      const auto z = static_cast<std::size_t>(state_index(k, s == 1));
      const double ps = s == 1 ? epi_.p_symptomatic_given_infected
                               : 1.0 - epi_.p_symptomatic_given_infected;
      prior_[z] = pmf[static_cast<std::size_t>(k)] * ps;
      onset_[z] = k;
      inf_begin_[z] = std::max(0, k - epi_.infectious_pre_onset_days);
      inf_end_[z] = k + epi_.infectious_post_onset_days;
    }
  }
}

double LatentModel::symptom_likelihood(int z, int day, bool observed) const {
  if (symptomatic_on(z, day)) return observed ? 1.0 : 0.0;
  return observed ? epi_.p_false_symptom_per_day : 1.0 - epi_.p_false_symptom_per_day;
}

double LatentModel::result_likelihood(int z, int test_day, bool positive) const {
  const double p_pos =
      infectious(z, test_day) ? epi_.test_sensitivity : 1.0 - epi_.test_specificity;
  return positive ? p_pos : 1.0 - p_pos;
}

ObservationHistory history_at(const IndividualState& ind, int day, const EpiParams& epi) {
  ObservationHistory h;
  const auto n = static_cast<std::size_t>(day + 1);
  h.symptoms.assign(ind.symptom_observed_history.begin(),
                    ind.symptom_observed_history.begin() + static_cast<std::ptrdiff_t>(n));
  h.results.assign(n, ResultCode::kMissing);
  for (int t = 0; t + epi.result_delay_days <= day; ++t) {
    h.results[static_cast<std::size_t>(t)] = ind.reported_results[static_cast<std::size_t>(t)];
  }
  return h;
}

double prior_infection_probability(const EpiParams& epi) {
  const double ph = epi.p_high_transmissive_index;
  return (1.0 - ph) * epi.exposure_prob(false) + ph * epi.exposure_prob(true);
}

namespace {

// Fills records[i].q_now / q_future and weights[i] from per-contact likelihood
// vectors. Returns the posterior probability of a highly transmissive index.
double mix_posterior(const LatentModel& model, const std::vector<std::vector<double>>& lik,
                     int day, ClusterBelief& out) {
  const auto& epi = model.epi();
  const int S = model.num_states();
  const std::size_t n = lik.size();
  const std::array<double, 2> p_inf = {epi.exposure_prob(false), epi.exposure_prob(true)};
  const std::array<double, 2> pi_h = {1.0 - epi.p_high_transmissive_index,
                                      epi.p_high_transmissive_index};

  std::vector<double> lik_inf(n), lik_un(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int z = 1; z < S; ++z) acc += model.prior_given_infected(z) * lik[i][static_cast<std::size_t>(z)];
    lik_inf[i] = acc;
    lik_un[i] = lik[i][0];
  }

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::array<double, 2> log_post{};
  for (int h = 0; h < 2; ++h) {
    double lp = pi_h[static_cast<std::size_t>(h)] > 0.0 ? std::log(pi_h[static_cast<std::size_t>(h)]) : kNegInf;
    for (std::size_t i = 0; i < n && lp != kNegInf; ++i) {
      const double m = p_inf[static_cast<std::size_t>(h)] * lik_inf[i] +
                       (1.0 - p_inf[static_cast<std::size_t>(h)]) * lik_un[i];
      lp = m > 0.0 ? lp + std::log(m) : kNegInf;
    }
    log_post[static_cast<std::size_t>(h)] = lp;
  }
  std::array<double, 2> post{};
  if (log_post[0] == kNegInf && log_post[1] == kNegInf) {
    // Observations impossible under the model; fall back to the prior mixture.
    post = pi_h;
  } else {
    const double mx = std::max(log_post[0], log_post[1]);
    double norm = 0.0;
    for (int h = 0; h < 2; ++h) {
      post[static_cast<std::size_t>(h)] = log_post[static_cast<std::size_t>(h)] == kNegInf
                                              ? 0.0
                                              : std::exp(log_post[static_cast<std::size_t>(h)] - mx);
      norm += post[static_cast<std::size_t>(h)];
    }
    post[0] /= norm;
    post[1] /= norm;
  }

  out.day = day;
  out.records.resize(n);
  out.weights.assign(n, std::vector<double>(static_cast<std::size_t>(S), 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    auto& w = out.weights[i];
    for (int h = 0; h < 2; ++h) {
      const double ph = post[static_cast<std::size_t>(h)];
      if (ph == 0.0) continue;
      const double pinf = p_inf[static_cast<std::size_t>(h)];
      const double m = pinf * lik_inf[i] + (1.0 - pinf) * lik_un[i];
      if (m > 0.0) {
        w[0] += ph * (1.0 - pinf) * lik_un[i] / m;
        const double scale = ph * pinf / m;
        for (int z = 1; z < S; ++z) {
          w[static_cast<std::size_t>(z)] +=
              scale * model.prior_given_infected(z) * lik[i][static_cast<std::size_t>(z)];
        }
      } else {
        w[0] += ph * (1.0 - pinf);
        for (int z = 1; z < S; ++z) {
          w[static_cast<std::size_t>(z)] += ph * pinf * model.prior_given_infected(z);
        }
      }
    }
    auto& rec = out.records[i];
    rec.q_now = std::clamp(1.0 - w[0], 0.0, 1.0);
    for (int k = 0; k < 3; ++k) {
      double acc = 0.0;
      for (int z = 1; z < S; ++z) {
        if (model.infectious(z, day + 1 + k)) acc += w[static_cast<std::size_t>(z)];
      }
      rec.q_future[static_cast<std::size_t>(k)] = std::clamp(acc, 0.0, 1.0);
    }
  }
  return post[1];
}

std::vector<double> likelihood_from_history(const LatentModel& model, const ObservationHistory& h,
                                            int day) {
  const int S = model.num_states();
  std::vector<double> lik(static_cast<std::size_t>(S), 1.0);
  const int last_symptom = std::min<int>(day, static_cast<int>(h.symptoms.size()) - 1);
  for (int d = 0; d <= last_symptom; ++d) {
    const bool obs = h.symptoms[static_cast<std::size_t>(d)] != 0;
    for (int z = 0; z < S; ++z) lik[static_cast<std::size_t>(z)] *= model.symptom_likelihood(z, d, obs);
  }
  const int delay = model.epi().result_delay_days;
  for (int t = 0; t < static_cast<int>(h.results.size()) && t + delay <= day; ++t) {
    const auto r = h.results[static_cast<std::size_t>(t)];
    if (r == ResultCode::kMissing) continue;
    const bool pos = r == ResultCode::kPositive;
    for (int z = 0; z < S; ++z) lik[static_cast<std::size_t>(z)] *= model.result_likelihood(z, t, pos);
  }
  return lik;
}

}  // namespace

ClusterBelief posterior(const LatentModel& model, std::span<const ObservationHistory> histories,
                        int day) {
  const double prior_q = prior_infection_probability(model.epi());
  auto q_at = [&](int d, std::size_t i) -> double {
    if (d < 0) return prior_q;
    std::vector<std::vector<double>> lik;
    lik.reserve(histories.size());
    for (const auto& h : histories) lik.push_back(likelihood_from_history(model, h, d));
    ClusterBelief b;
    mix_posterior(model, lik, d, b);
    return b.records[i].q_now;
  };

  ClusterBelief out;
  if (day < 0) {
    // Empty history: the prior.
    std::vector<std::vector<double>> lik(histories.size(),
                                         std::vector<double>(static_cast<std::size_t>(model.num_states()), 1.0));
    out.p_high = mix_posterior(model, lik, day, out);
    for (auto& r : out.records) r.q_past = {prior_q, prior_q, prior_q};
    return out;
  }
  std::vector<std::vector<double>> lik;
  lik.reserve(histories.size());
  for (const auto& h : histories) lik.push_back(likelihood_from_history(model, h, day));
  out.p_high = mix_posterior(model, lik, day, out);
  for (std::size_t i = 0; i < histories.size(); ++i) {
    for (int k = 0; k < 3; ++k) out.records[i].q_past[static_cast<std::size_t>(k)] = q_at(day - 3 + k, i);
  }
  return out;
}

ClusterBelief posterior(std::span<const ObservationHistory> histories, int day,
                        const EpiParams& epi) {
  const LatentModel model(epi);
  return posterior(model, histories, day);
}

// ---------------------------------------------------------------------------

ClusterBeliefTracker::ClusterBeliefTracker(std::shared_ptr<const LatentModel> model, int size)
    : model_(std::move(model)),
      size_(size),
      likelihood_(static_cast<std::size_t>(size),
                  std::vector<double>(static_cast<std::size_t>(model_->num_states()), 1.0)),
      q_history_(static_cast<std::size_t>(size)) {
  mix_posterior(*model_, likelihood_, -1, belief_);
  const double prior_q = prior_infection_probability(model_->epi());
  for (auto& r : belief_.records) r.q_past = {prior_q, prior_q, prior_q};
}

void ClusterBeliefTracker::update(const ClusterState& cluster) {
  if (cluster.size != size_) throw StateError("belief tracker bound to a different cluster");
  const int S = model_->num_states();
  const int delay = model_->epi().result_delay_days;
  // Catch up one day at a time so the tracker tolerates skipped calls.
  while (day_ < cluster.current_day && day_ + 1 < model_->epi().episode_days) {
    const int d = ++day_;
    for (int i = 0; i < size_; ++i) {
      const auto& ind = cluster.individuals[static_cast<std::size_t>(i)];
      auto& lik = likelihood_[static_cast<std::size_t>(i)];
      const bool obs = ind.symptom_observed_history[static_cast<std::size_t>(d)] != 0;
      for (int z = 0; z < S; ++z) lik[static_cast<std::size_t>(z)] *= model_->symptom_likelihood(z, d, obs);
      const int t = d - delay;
      if (t >= 0) {
        const auto r = ind.reported_results[static_cast<std::size_t>(t)];
        if (r != ResultCode::kMissing) {
          const bool pos = r == ResultCode::kPositive;
          for (int z = 0; z < S; ++z) lik[static_cast<std::size_t>(z)] *= model_->result_likelihood(z, t, pos);
        }
      }
    }
    belief_.p_high = mix_posterior(*model_, likelihood_, d, belief_);
    for (int i = 0; i < size_; ++i) {
      auto& rec = belief_.records[static_cast<std::size_t>(i)];
      for (int k = 0; k < 3; ++k) rec.q_past[static_cast<std::size_t>(k)] = q_on(i, d - 3 + k);
      q_history_[static_cast<std::size_t>(i)].push_back(rec.q_now);
    }
  }
}

double ClusterBeliefTracker::q_on(int i, int day) const {
  const auto& hist = q_history_[static_cast<std::size_t>(i)];
  if (day < 0 || hist.empty()) return prior_infection_probability(model_->epi());
  return hist[static_cast<std::size_t>(std::min<int>(day, static_cast<int>(hist.size()) - 1))];
}

// ---------------------------------------------------------------------------

double quarantine_threshold(double alpha2) {
  if (!(alpha2 >= 0.0)) throw ParameterError("alpha2 must be >= 0");
  return alpha2 / (1.0 + alpha2);
}

QuarantineDecision quarantine_decision(double q_now, double alpha2) {
  return q_now > quarantine_threshold(alpha2) ? QuarantineDecision::kQuarantine
                                              : QuarantineDecision::kRelease;
}

}  // namespace outbreak
