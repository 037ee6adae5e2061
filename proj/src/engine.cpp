#include "outbreak/engine.hpp"

#include <algorithm>
#include <chrono>

#include "outbreak/baselines.hpp"
#include "outbreak/errors.hpp"

namespace outbreak {

namespace {

struct Named {
  PolicyKind kind;
  const char* name;
};

constexpr Named kPolicyNames[] = {
    {PolicyKind::kSympAvgRand, "symp-avg-rand"},   {PolicyKind::kThresAvgRand, "thres-avg-rand"},
    {PolicyKind::kThresSizeRand, "thres-size-rand"}, {PolicyKind::kFixedMQr, "fixed-m-qr"},
    {PolicyKind::kBinMQr, "bin-m-qr"},             {PolicyKind::kHierPpo, "hier-ppo"},
};

}  // namespace

std::string policy_name(PolicyKind kind) {
  for (const auto& n : kPolicyNames) {
    if (n.kind == kind) return n.name;
  }
  return "unknown";
}

PolicyKind parse_policy(std::string_view name) {
  for (const auto& n : kPolicyNames) {
    if (name == n.name) return n.kind;
  }
  throw ParameterError("unknown policy '" + std::string(name) + "'");
}

bool uses_ranking(PolicyKind kind) {
  return kind == PolicyKind::kFixedMQr || kind == PolicyKind::kBinMQr ||
         kind == PolicyKind::kHierPpo;
}

std::vector<PolicyKind> all_policies() {
  std::vector<PolicyKind> out;
  for (const auto& n : kPolicyNames) out.push_back(n.kind);
  return out;
}

void PolicyBinding::validate() const {
  range.validate();
  if (uses_ranking(kind) && !estimator) {
    throw ParameterError(policy_name(kind) + " needs a value estimator");
  }
  if (kind == PolicyKind::kHierPpo && !ppo) throw ParameterError("hier-ppo needs a PPO policy");
  if (kind == PolicyKind::kFixedMQr) outbreak::fixed_m(fixed_m, range);
  if (search_iters < 2) throw ParameterError("search_iters must be >= 2");
  if (symptom_window < 1) throw ParameterError("symptom_window must be >= 1");
}

Engine::Engine(const SystemConfig& config, std::uint64_t seed, PolicyBinding policy,
               bool record_individuals)
    : config_(config),
      seed_(seed),
      policy_(std::move(policy)),
      record_(record_individuals),
      model_(std::make_shared<const LatentModel>(config.epi)),
      state_(make_system(config, seed)) {
  policy_.validate();
  trackers_.resize(state_.clusters.size());
}

void Engine::set_policy(PolicyBinding policy) {
  policy.validate();
  policy_ = std::move(policy);
}

void Engine::set_budget(int budget) {
  if (budget < 0) throw ParameterError("budget must be >= 0");
  state_.budget = budget;
}

const ClusterBeliefTracker* Engine::tracker(int cluster_id) const {
  const auto& t = trackers_.at(static_cast<std::size_t>(cluster_id));
  return t ? &*t : nullptr;
}

void Engine::refresh_beliefs() {
  for (const auto& c : state_.clusters) {
    if (!c.active()) continue;
    auto& t = trackers_[static_cast<std::size_t>(c.id)];
    if (!t) t.emplace(model_, c.size);
    t->update(c);
  }
}

GlobalObs Engine::observe_global() {
  refresh_beliefs();
  std::vector<const ClusterBeliefTracker*> ptrs(trackers_.size(), nullptr);
  for (std::size_t k = 0; k < trackers_.size(); ++k) {
    if (trackers_[k]) ptrs[k] = &*trackers_[k];
  }
  return build_global(state_, ptrs, global_scale(config_), config_.n_max);
}

DayRecord Engine::step(const StepOverride& ov) {
  using Clock = std::chrono::steady_clock;
  if (done()) throw StateError("episode already finished");
  refresh_beliefs();

  const auto& epi = config_.epi;
  const int budget = ov.budget.value_or(state_.budget);
  if (budget < 0) throw ParameterError("budget override must be >= 0");
  if (ov.multiplier) {
    const double m = *ov.multiplier;
    if (!(m >= policy_.range.m_min && m <= policy_.range.m_max)) {
      throw ParameterError("multiplier override " + std::to_string(m) + " outside [" +
                           std::to_string(policy_.range.m_min) + ", " +
                           std::to_string(policy_.range.m_max) + "]");
    }
  }
  const double threshold = quarantine_threshold(config_.alpha2);

  DayRecord rec;
  rec.day = state_.day;
  rec.decision.budget = budget;
  rec.decision.overridden = ov.multiplier.has_value() || ov.budget.has_value();

  const auto active = state_.active_ids();
  rec.active_clusters = static_cast<int>(active.size());

  JointActions joint;
  std::vector<std::vector<double>> delta_by_cluster(state_.clusters.size());
  for (int id : active) {
    const auto& c = state_.clusters[static_cast<std::size_t>(id)];
    const auto& tr = *trackers_[static_cast<std::size_t>(id)];
    ClusterActions ca;
    ca.cluster_id = id;
    ca.actions.assign(static_cast<std::size_t>(c.size), IndividualAction{});
    if (c.current_day >= epi.decision_start_day) {
      for (int i = 0; i < c.size; ++i) {
        auto& a = ca.actions[static_cast<std::size_t>(i)];
        if (policy_.kind == PolicyKind::kSympAvgRand) {
          a.quarantine = symptom_quarantine(c.individuals[static_cast<std::size_t>(i)],
                                            c.current_day, policy_.symptom_window,
                                            epi.result_delay_days);
        } else {
          a.quarantine = tr.record(i).q_now > threshold;
        }
      }
    }
    joint.clusters.push_back(std::move(ca));
  }

  if (uses_ranking(policy_.kind)) {
    std::vector<CandidateAction> cands;
    std::vector<LocalObs> obs;
    std::vector<BeliefContext> ctx;
    std::vector<std::size_t> joint_index;
    for (std::size_t k = 0; k < joint.clusters.size(); ++k) {
      const int id = joint.clusters[k].cluster_id;
      const auto& c = state_.clusters[static_cast<std::size_t>(id)];
      if (c.current_day < epi.decision_start_day) continue;
      const auto& tr = *trackers_[static_cast<std::size_t>(id)];
      for (int i = 0; i < c.size; ++i) {
        cands.push_back({id, i, 0.0});
        obs.push_back(build_local(c.individuals[static_cast<std::size_t>(i)], tr.record(i), 0.0,
                                  c.current_day, epi));
        ctx.push_back({tr.weights(i), c.current_day});
        joint_index.push_back(k);
      }
    }
    std::vector<double> dq(obs.size());
    const auto& est = *policy_.estimator;
    int passes = 0;
    auto evaluate = [&](double m) {
      if (obs.empty()) return;
      const double a3 = m * config_.alpha3_true;
      for (auto& o : obs) o[kAlpha3Slot] = a3;
      est.delta_q_batch(obs, ctx, dq);
      ++passes;
    };
    // DeltaQ at the smallest feasible multiplier seen by the search, reused
    // for the ranking pass.
    std::vector<double> dq_feasible;
    std::optional<double> m_feasible;

    const auto t0 = Clock::now();
    double m = 1.0;
    if (ov.multiplier) {
      m = *ov.multiplier;
    } else if (policy_.kind == PolicyKind::kFixedMQr) {
      m = policy_.fixed_m;
    } else if (policy_.kind == PolicyKind::kBinMQr) {
      // One pass is held back for ranking so the step never exceeds search_iters.
      const auto r = bin_search_m(
          [&](double mm) {
            evaluate(mm);
            const int d = positive_demand(dq);
            if (d <= budget) {
              dq_feasible = dq;
              m_feasible = mm;
            }
            return d;
          },
          budget, policy_.range, policy_.search_iters - 1);
      m = r.m;
    } else {
      std::vector<const ClusterBeliefTracker*> ptrs(trackers_.size(), nullptr);
      for (std::size_t k = 0; k < trackers_.size(); ++k) {
        if (trackers_[k]) ptrs[k] = &*trackers_[k];
      }
      const GlobalObs g = build_global(state_, ptrs, global_scale(config_), config_.n_max);
      m = policy_.ppo->decide(g);
      rec.decision.policy_evaluations = 1;
    }
    if (m_feasible && *m_feasible == m) {
      dq = std::move(dq_feasible);
    } else {
      evaluate(m);
    }
    rec.decision.demand_evaluations = passes;
    for (std::size_t j = 0; j < cands.size(); ++j) cands[j].delta_q = dq[j];
    const Allocation alloc = q_rank_allocate(cands, budget);
    rec.decision.decision_seconds = std::chrono::duration<double>(Clock::now() - t0).count();

    for (std::size_t j = 0; j < cands.size(); ++j) {
      auto& ca = joint.clusters[joint_index[j]];
      ca.actions[static_cast<std::size_t>(cands[j].individual_id)].test = alloc.test[j] != 0;
      auto& per = delta_by_cluster[static_cast<std::size_t>(cands[j].cluster_id)];
      if (per.empty()) per.assign(static_cast<std::size_t>(state_.clusters[static_cast<std::size_t>(cands[j].cluster_id)].size), 0.0);
      per[static_cast<std::size_t>(cands[j].individual_id)] = dq[j];
    }
    rec.decision.multiplier = m;
    rec.decision.candidates = alloc.candidates;
    rec.decision.demand = alloc.positives;
    rec.decision.executed = alloc.executed;
  } else {
    const auto t0 = Clock::now();
    std::vector<HeuristicCluster> eligible;
    std::vector<std::size_t> joint_index;
    for (std::size_t k = 0; k < joint.clusters.size(); ++k) {
      const auto& c = state_.clusters[static_cast<std::size_t>(joint.clusters[k].cluster_id)];
      if (c.current_day < epi.decision_start_day) continue;
      eligible.push_back({c.id, c.size, c.current_day});
      joint_index.push_back(k);
      rec.decision.candidates += c.size;
    }
    const auto kind = policy_.kind == PolicyKind::kSympAvgRand    ? HeuristicKind::kSympAvgRand
                      : policy_.kind == PolicyKind::kThresAvgRand ? HeuristicKind::kThresAvgRand
                                                                  : HeuristicKind::kThresSizeRand;
    const auto picks = heuristic_tests(kind, eligible, budget, state_.rng_root, state_.day);
    int executed = 0;
    for (std::size_t k = 0; k < picks.size(); ++k) {
      for (int i : picks[k]) {
        joint.clusters[joint_index[k]].actions[static_cast<std::size_t>(i)].test = true;
        ++executed;
      }
    }
    rec.decision.decision_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    rec.decision.multiplier = 1.0;
    rec.decision.demand = executed;
    rec.decision.executed = executed;
  }

  joint.demand = rec.decision.demand;
  joint.multiplier = rec.decision.multiplier;

  if (record_) {
    for (const auto& ca : joint.clusters) {
      const auto& c = state_.clusters[static_cast<std::size_t>(ca.cluster_id)];
      const auto& tr = *trackers_[static_cast<std::size_t>(ca.cluster_id)];
      const auto& per = delta_by_cluster[static_cast<std::size_t>(ca.cluster_id)];
      const int t = c.current_day;
      for (int i = 0; i < c.size; ++i) {
        const auto& ind = c.individuals[static_cast<std::size_t>(i)];
        IndividualDayRecord r;
        r.cluster = c.id;
        r.local_day = t;
        r.individual = i;
        r.infected = ind.infected_by(t);
        r.infectious = ind.infectious_on(epi, t);
        r.symptom = ind.symptom_observed_history[static_cast<std::size_t>(t)] != 0;
        const int sample_day = t - epi.result_delay_days;
        if (sample_day >= 0) {
          r.result = static_cast<int>(ind.reported_results[static_cast<std::size_t>(sample_day)]);
        }
        r.q_now = tr.record(i).q_now;
        r.delta_q = per.empty() ? 0.0 : per[static_cast<std::size_t>(i)];
        r.test = ca.actions[static_cast<std::size_t>(i)].test;
        r.quarantine = ca.actions[static_cast<std::size_t>(i)].quarantine;
        r.obs = build_local(ind, tr.record(i), rec.decision.multiplier * config_.alpha3_true, t, epi);
        rec.individuals.push_back(r);
      }
    }
  }

  const int saved_budget = state_.budget;
  state_.budget = budget;
  try {
    rec.step = step_system(state_, joint, config_);
  } catch (...) {
    state_.budget = saved_budget;
    throw;
  }
  state_.budget = saved_budget;

  if (record_) {
    std::size_t pos = 0;
    for (const auto& cr : rec.step.rewards) {
      for (const auto& o : cr.outcome.individuals) {
        auto& r = rec.individuals[pos++];
        const bool counted = r.local_day >= epi.decision_start_day;
        r.s1 = counted && o.infectious_unquarantined ? 1 : 0;
        r.s2 = counted && o.quarantined_uninfected ? 1 : 0;
        r.s3 = o.tested ? 1 : 0;
      }
    }
  }
  return rec;
}

}  // namespace outbreak
