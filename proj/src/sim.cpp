#include "outbreak/sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "outbreak/errors.hpp"
#include "outbreak/objective.hpp"
#include "outbreak/rng.hpp"

namespace outbreak {
namespace {

std::uint32_t u32(int v) { return static_cast<std::uint32_t>(v); }

void infect(IndividualState& ind, const EpiParams& epi, std::uint64_t seed, int cluster_id,
            int individual, int day) {
  CounterStream incubation(seed, u32(cluster_id), u32(individual), u32(day), Channel::kIncubation);
  const double x = std::exp(epi.lognormal_mu() + epi.lognormal_sigma() * incubation.normal());
  ind.infected = true;
  ind.infection_day = day;
  ind.symptom_onset_day = day + onset_offset_from_incubation(epi, x);
  ind.will_be_symptomatic = uniform_at(seed, u32(cluster_id), u32(individual), u32(day),
                                       Channel::kSymptomatic) < epi.p_symptomatic_given_infected;
}

void emit_observations(ClusterState& c, const EpiParams& epi, std::uint64_t seed, int day) {
  for (int i = 0; i < c.size; ++i) {
    auto& ind = c.individuals[static_cast<std::size_t>(i)];
    const bool truly = ind.infected && true_symptom_on(epi, ind.will_be_symptomatic,
                                                       *ind.symptom_onset_day, day);
    const bool falsely =
        uniform_at(seed, u32(c.id), u32(i), u32(day), Channel::kFalseSymptom) <
        epi.p_false_symptom_per_day;
    ind.symptom_observed_history[static_cast<std::size_t>(day)] = (truly || falsely) ? 1 : 0;

    auto& pending = ind.pending_results;
    for (auto it = pending.begin(); it != pending.end();) {
      if (it->available_day == day) {
        ind.reported_results[static_cast<std::size_t>(it->test_day)] =
            it->positive ? ResultCode::kPositive : ResultCode::kNegative;
        it = pending.erase(it);
      } else {
        ++it;
      }
    }
  }
}

}  // namespace

bool IndividualState::infectious_on(const EpiParams& epi, int day) const {
  return infected && outbreak::infectious_on(epi, *infection_day, *symptom_onset_day, day);
}

ClusterState spawn_cluster(std::uint64_t seed, const EpiParams& epi, int size, int cluster_id,
                           int activation_day) {
  if (size < epi.cluster_size_min || size > epi.cluster_size_max) {
    throw ParameterError("cluster size " + std::to_string(size) + " outside [" +
                         std::to_string(epi.cluster_size_min) + ", " +
                         std::to_string(epi.cluster_size_max) + "]");
  }
  ClusterState c;
  c.id = cluster_id;
  c.size = size;
  c.activation_day = activation_day;
  c.index_high_transmissive = uniform_at(seed, u32(cluster_id), kNoIndividual, 0,
                                         Channel::kIndexType) < epi.p_high_transmissive_index;
  const double p_exposure = epi.exposure_prob(c.index_high_transmissive);
  const auto days = static_cast<std::size_t>(epi.episode_days);
  c.tests_per_day.assign(days, 0);
  c.individuals.resize(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    auto& ind = c.individuals[static_cast<std::size_t>(i)];
    ind.symptom_observed_history.assign(days, 0);
    ind.tested_history.assign(days, 0);
    ind.quarantine_history.assign(days, 0);
    ind.reported_results.assign(days, ResultCode::kMissing);
    if (uniform_at(seed, u32(cluster_id), u32(i), 0, Channel::kExposure) < p_exposure) {
      infect(ind, epi, seed, cluster_id, i, 0);
    }
  }
  c.status = ClusterStatus::kActive;
  c.current_day = 0;
  emit_observations(c, epi, seed, 0);
  return c;
}

ClusterStepOutcome step_cluster(ClusterState& c, int day, std::span<const IndividualAction> actions,
                                const EpiParams& epi, std::uint64_t seed) {
  if (!c.active()) throw StateError("cluster " + std::to_string(c.id) + " is not active");
  if (day != c.current_day) {
    throw StateError("cluster " + std::to_string(c.id) + " expects day " +
                     std::to_string(c.current_day) + ", got " + std::to_string(day));
  }
  if (actions.size() != static_cast<std::size_t>(c.size)) {
    throw ParameterError("actions sized " + std::to_string(actions.size()) + " for cluster of " +
                         std::to_string(c.size));
  }
  const bool deciding = day >= epi.decision_start_day;
  if (!deciding) {
    for (const auto& a : actions) {
      if (a.test || a.quarantine) {
        throw StateError("interventions requested during the tracing delay (day " +
                         std::to_string(day) + ")");
      }
    }
  }

  const auto d = static_cast<std::size_t>(day);
  ClusterStepOutcome out;
  out.day = day;
  out.individuals.resize(static_cast<std::size_t>(c.size));
  int infectious_free = 0;
  for (int i = 0; i < c.size; ++i) {
    auto& ind = c.individuals[static_cast<std::size_t>(i)];
    const auto& act = actions[static_cast<std::size_t>(i)];
    if (act.quarantine && !ind.quarantined) ind.quarantine_start_day = day;
    if (!act.quarantine) ind.quarantine_start_day.reset();
    ind.quarantined = act.quarantine;
    ind.quarantine_history[d] = act.quarantine ? 1 : 0;

    const bool infectious = ind.infectious_on(epi, day);
    if (act.test) {
      ind.tested_history[d] = 1;
      const double u = uniform_at(seed, u32(c.id), u32(i), u32(day), Channel::kTestOutcome);
      const bool positive =
          infectious ? (u < epi.test_sensitivity) : (u < 1.0 - epi.test_specificity);
      ind.pending_results.push_back({day + epi.result_delay_days, day, positive});
    }
    auto& o = out.individuals[static_cast<std::size_t>(i)];
    o.tested = act.test;
    o.infectious_unquarantined = infectious && !act.quarantine;
    o.quarantined_uninfected = act.quarantine && !ind.infected_by(day);
    if (deciding) {
      out.ds1 += o.infectious_unquarantined ? 1 : 0;
      out.ds2 += o.quarantined_uninfected ? 1 : 0;
    }
    out.ds3 += act.test ? 1 : 0;
    if (o.infectious_unquarantined) ++infectious_free;
  }
  c.s1_days += out.ds1;
  c.s2_days += out.ds2;
  c.s3_tests += out.ds3;
  c.tests_per_day[d] = out.ds3;

  if (epi.within_cluster_transmission && infectious_free > 0 && day + 1 < epi.episode_days) {
    const double p = 1.0 - std::pow(1.0 - epi.base_transmission_prob, infectious_free);
    for (int i = 0; i < c.size; ++i) {
      auto& ind = c.individuals[static_cast<std::size_t>(i)];
      if (ind.infected || ind.quarantined) continue;
      if (uniform_at(seed, u32(c.id), u32(i), u32(day), Channel::kTransmission) < p) {
        infect(ind, epi, seed, c.id, i, day + 1);
      }
    }
  }

  c.current_day = day + 1;
  if (c.current_day >= epi.episode_days) {
    c.status = ClusterStatus::kFinished;
  } else {
    emit_observations(c, epi, seed, c.current_day);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ScheduleEntry> make_schedule(ActivationMode mode, int n_clusters, int n_max,
                                         int stagger_window, std::uint64_t seed) {
  if (n_clusters < 0) throw ParameterError("n_clusters must be >= 0");
  if (n_clusters > n_max) {
    throw ParameterError("n_clusters " + std::to_string(n_clusters) + " exceeds n_max " +
                         std::to_string(n_max));
  }
  if (stagger_window < 0) throw ParameterError("stagger_window must be >= 0");
  std::vector<ScheduleEntry> schedule;
  schedule.reserve(static_cast<std::size_t>(n_clusters));
  for (int k = 0; k < n_clusters; ++k) {
    int day = 0;
    if (mode == ActivationMode::kAsynchronous && stagger_window > 0) {
      CounterStream s(seed, u32(k), kNoIndividual, 0, Channel::kSchedule);
      day = static_cast<int>(s.uniform_int(0, stagger_window));
    }
    schedule.push_back({k, day});
  }
  std::stable_sort(schedule.begin(), schedule.end(), [](const auto& a, const auto& b) {
    return a.activation_day != b.activation_day ? a.activation_day < b.activation_day
                                                : a.cluster_id < b.cluster_id;
  });
  return schedule;
}

void SystemConfig::validate() const {
  epi.validate();
  if (n_clusters < 0) throw ParameterError("n_clusters must be >= 0");
  if (n_max < 1) throw ParameterError("n_max must be >= 1");
  if (n_clusters > n_max) throw ParameterError("n_clusters exceeds n_max");
  if (budget < 0) throw ParameterError("budget must be >= 0");
  if (nominal_budget < 0) throw ParameterError("nominal_budget must be >= 0");
  if (!(alpha2 >= 0.0)) throw ParameterError("alpha2 must be >= 0");
  if (!(alpha3_true >= 0.0)) throw ParameterError("alpha3_true must be >= 0");
  if (stagger_window < 0) throw ParameterError("stagger_window must be >= 0");
  if (fixed_cluster_size != 0 && (fixed_cluster_size < epi.cluster_size_min ||
                                  fixed_cluster_size > epi.cluster_size_max)) {
    throw ParameterError("fixed_cluster_size outside the configured size range");
  }
}

std::vector<int> MultiClusterState::active_ids() const {
  std::vector<int> ids;
  for (const auto& c : clusters) {
    if (c.active()) ids.push_back(c.id);
  }
  return ids;
}

namespace {

void activate_due(MultiClusterState& s) {
  for (auto& c : s.clusters) {
    if (c.status == ClusterStatus::kPending && c.activation_day == s.day) {
      c.status = ClusterStatus::kActive;
    }
  }
}

}  // namespace

MultiClusterState make_system(const SystemConfig& config, std::uint64_t seed) {
  config.validate();
  MultiClusterState s;
  s.rng_root = seed;
  s.budget = config.budget;
  s.activation_schedule =
      make_schedule(config.mode, config.n_clusters, config.n_max, config.stagger_window, seed);
  s.clusters.resize(static_cast<std::size_t>(config.n_clusters));
  int last_activation = 0;
  for (const auto& e : s.activation_schedule) {
    int size = config.fixed_cluster_size;
    if (size == 0) {
      CounterStream draw(seed, u32(e.cluster_id), kNoIndividual, 0, Channel::kClusterSize);
      size = static_cast<int>(
          draw.uniform_int(config.epi.cluster_size_min, config.epi.cluster_size_max));
    }
    auto c = spawn_cluster(seed, config.epi, size, e.cluster_id, e.activation_day);
    c.status = ClusterStatus::kPending;
    s.clusters[static_cast<std::size_t>(e.cluster_id)] = std::move(c);
    last_activation = std::max(last_activation, e.activation_day);
  }
  s.horizon = config.n_clusters == 0 ? 0 : last_activation + config.epi.episode_days;
  s.day = 0;
  activate_due(s);
  return s;
}

SystemStepResult step_system(MultiClusterState& s, const JointActions& joint,
                             const SystemConfig& config) {
  int total_tests = 0;
  for (const auto& ca : joint.clusters) {
    for (const auto& a : ca.actions) total_tests += a.test ? 1 : 0;
  }
  if (total_tests > s.budget) {
    throw BudgetViolation("day " + std::to_string(s.day) + ": " + std::to_string(total_tests) +
                          " tests exceed budget " + std::to_string(s.budget));
  }

  CostParams costs;
  costs.alpha2 = config.alpha2;
  costs.alpha3_true = config.alpha3_true;

  SystemStepResult result;
  result.day = s.day;
  result.executed_tests = total_tests;
  std::vector<const ClusterActions*> by_id(s.clusters.size(), nullptr);
  for (const auto& ca : joint.clusters) {
    if (ca.cluster_id < 0 || static_cast<std::size_t>(ca.cluster_id) >= s.clusters.size()) {
      throw ParameterError("unknown cluster id " + std::to_string(ca.cluster_id));
    }
    if (!s.clusters[static_cast<std::size_t>(ca.cluster_id)].active()) {
      throw StateError("actions supplied for inactive cluster " + std::to_string(ca.cluster_id));
    }
    by_id[static_cast<std::size_t>(ca.cluster_id)] = &ca;
  }

  std::vector<IndividualAction> idle;
  for (auto& c : s.clusters) {
    if (!c.active()) continue;
    const auto* ca = by_id[static_cast<std::size_t>(c.id)];
    std::span<const IndividualAction> acts;
    if (ca != nullptr) {
      acts = ca->actions;
    } else {
      idle.assign(static_cast<std::size_t>(c.size), IndividualAction{});
      acts = idle;
    }
    ClusterStepReward r;
    r.cluster_id = c.id;
    r.size = c.size;
    r.outcome = step_cluster(c, s.day - c.activation_day, acts, config.epi, s.rng_root);
    r.reward = cluster_reward(r.outcome.ds1, r.outcome.ds2, r.outcome.ds3, c.size, costs).reward;
    result.rewards.push_back(std::move(r));
  }

  s.last_demand = joint.demand;
  s.last_multiplier = joint.multiplier;
  s.last_shortage = joint.demand > s.budget;
  ++s.day;
  activate_due(s);
  return result;
}

}  // namespace outbreak
