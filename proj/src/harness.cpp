#include "outbreak/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "outbreak/checkpoint.hpp"
#include "outbreak/config.hpp"
#include "outbreak/errors.hpp"
#include "outbreak/objective.hpp"
#include "outbreak/ppo.hpp"
#include "outbreak/rng.hpp"

namespace outbreak {

using nlohmann::json;

SystemConfig desk_system() {
  SystemConfig s;
  s.epi.cluster_size_max = 10;
  s.n_clusters = 10;
  s.budget = 10;
  return s;
}

void ExperimentSpec::validate() const {
  system.validate();
  if (episodes < 1) throw ParameterError("experiment.episodes must be >= 1");
  if (seeds.empty()) throw ParameterError("experiment.seeds must list at least one seed");
  if (workers < 1) throw ParameterError("experiment.workers must be >= 1");
  if (search_iters < 2) throw ParameterError("experiment.search_iters must be >= 2");
  MultiplierRange{m_min, m_max}.validate();
  if (policy == PolicyKind::kFixedMQr) outbreak::fixed_m(fixed_m, {m_min, m_max});
  if (policy == PolicyKind::kHierPpo && ppo_checkpoint.empty()) {
    throw ParameterError("experiment.ppo_checkpoint is required for hier-ppo");
  }
}

json to_json(const ExperimentSpec& s) {
  json seeds = json::array();
  for (auto v : s.seeds) seeds.push_back(v);
  return json{{"schema_version", kConfigSchemaVersion},
              {"system", to_json(s.system)},
              {"experiment",
               {{"policy", policy_name(s.policy)},
                {"value_checkpoint", s.value_checkpoint},
                {"ppo_checkpoint", s.ppo_checkpoint},
                {"fixed_m", s.fixed_m},
                {"m_min", s.m_min},
                {"m_max", s.m_max},
                {"search_iters", s.search_iters},
                {"symptom_window", s.symptom_window},
                {"episodes", s.episodes},
                {"seeds", seeds},
                {"workers", s.workers},
                {"dump_trajectory", s.dump_trajectory}}}};
}

ExperimentSpec experiment_from_json(const json& doc, const ExperimentSpec& base) {
  if (!doc.is_object()) throw InputError("config document must be an object");
  for (const auto& item : doc.items()) {
    if (item.key() != "schema_version" && item.key() != "system" && item.key() != "experiment") {
      throw InputError("unknown top-level key '" + item.key() + "'");
    }
  }
  if (!doc.contains("schema_version")) throw InputError("config is missing schema_version");
  if (doc.at("schema_version") != kConfigSchemaVersion) {
    throw InputError("unsupported config schema_version " + doc.at("schema_version").dump());
  }
  ExperimentSpec s = base;
  if (doc.contains("system")) s.system = system_from_json(doc.at("system"), base.system);
  if (doc.contains("experiment")) {
    const json& e = doc.at("experiment");
    if (!e.is_object()) throw InputError("experiment must be an object");
    try {
      for (const auto& item : e.items()) {
        const auto& k = item.key();
        const auto& v = item.value();
        if (k == "policy") s.policy = parse_policy(v.get<std::string>());
        else if (k == "value_checkpoint") s.value_checkpoint = v.get<std::string>();
        else if (k == "ppo_checkpoint") s.ppo_checkpoint = v.get<std::string>();
        else if (k == "fixed_m") s.fixed_m = v.get<double>();
        else if (k == "m_min") s.m_min = v.get<double>();
        else if (k == "m_max") s.m_max = v.get<double>();
        else if (k == "search_iters") s.search_iters = v.get<int>();
        else if (k == "symptom_window") s.symptom_window = v.get<int>();
        else if (k == "episodes") s.episodes = v.get<int>();
        else if (k == "seeds") s.seeds = v.get<std::vector<std::uint64_t>>();
        else if (k == "workers") s.workers = v.get<int>();
        else if (k == "dump_trajectory") s.dump_trajectory = v.get<bool>();
        else throw InputError("unknown key '" + k + "' in experiment");
      }
    } catch (const json::exception& ex) {
      throw InputError(std::string("experiment field has the wrong type: ") + ex.what());
    }
  }
  // Experiment-level checks wait for command-line overrides; see validate().
  s.system.validate();
  return s;
}

PolicyBinding make_binding(const ExperimentSpec& spec) {
  PolicyBinding b;
  b.kind = spec.policy;
  b.range = {spec.m_min, spec.m_max};
  b.fixed_m = spec.fixed_m;
  b.search_iters = spec.search_iters;
  b.symptom_window = spec.symptom_window;
  if (uses_ranking(spec.policy)) {
    if (spec.value_checkpoint.empty()) {
      b.estimator = std::make_shared<AnalyticEstimator>(
          std::make_shared<const LatentModel>(spec.system.epi), spec.system.alpha2);
    } else {
      auto est = estimator_from_checkpoint(load_checkpoint(spec.value_checkpoint));
      LearnedSpec ls = est.spec();
      if (!ls.include_alpha2 && std::abs(ls.alpha2 - spec.system.alpha2) > 1e-12) {
        throw InputError("value checkpoint " + spec.value_checkpoint + " was trained with alpha2=" +
                         std::to_string(ls.alpha2) + " but the experiment uses alpha2=" +
                         std::to_string(spec.system.alpha2));
      }
      if (ls.include_alpha2) {
        ls.alpha2 = spec.system.alpha2;
        LearnedEstimator rebound(ls);
        rebound.theta() = est.theta();
        b.estimator = std::make_shared<LearnedEstimator>(std::move(rebound));
      } else {
        b.estimator = std::make_shared<LearnedEstimator>(std::move(est));
      }
    }
  }
  if (spec.policy == PolicyKind::kHierPpo) {
    auto p = ppo_from_checkpoint(load_checkpoint(spec.ppo_checkpoint));
    b.ppo = p;
    b.range = p->spec().range;
  }
  b.validate();
  return b;
}

EpisodeResult run_episode(const SystemConfig& config, const PolicyBinding& binding,
                          std::uint64_t seed, int episode, bool keep_individuals) {
  Engine engine(config, derive_seed(seed, static_cast<std::uint64_t>(episode)), binding,
                keep_individuals);
  EpisodeResult r;
  r.seed = seed;
  r.episode = episode;
  r.max_tests_minus_budget = -config.budget;
  while (!engine.done()) {
    DayRecord rec = engine.step();
    StepLog log;
    log.day = rec.day;
    log.active_clusters = rec.active_clusters;
    log.decision = rec.decision;
    for (const auto& cr : rec.step.rewards) log.reward += cr.reward;
    r.tests += rec.step.executed_tests;
    r.max_tests_minus_budget =
        std::max(r.max_tests_minus_budget, rec.step.executed_tests - rec.decision.budget);
    if (rec.step.executed_tests > rec.decision.budget) ++r.budget_violations;
    r.steps.push_back(log);
    if (keep_individuals) {
      for (auto& cr : rec.step.rewards) cr.outcome.individuals.clear();
      r.trajectory.push_back(std::move(rec));
    }
    ++r.days;
  }
  const auto& state = engine.state();
  CostParams costs;
  costs.alpha2 = config.alpha2;
  costs.alpha3_true = config.alpha3_true;
  const double n_clusters = static_cast<double>(state.clusters.size());
  for (const auto& c : state.clusters) {
    ClusterEpisode ce;
    ce.seed = seed;
    ce.episode = episode;
    ce.cluster = c.id;
    ce.size = c.size;
    ce.activation_day = c.activation_day;
    ce.s1 = c.s1_days;
    ce.s2 = c.s2_days;
    ce.s3 = c.s3_tests;
    const auto rb = cluster_reward(static_cast<double>(c.s1_days), static_cast<double>(c.s2_days),
                                   static_cast<double>(c.s3_tests), c.size, costs);
    ce.reward = rb.reward;
    r.episode_return += rb.reward / n_clusters;
    r.s1 += rb.s1_norm / n_clusters;
    r.s2 += rb.s2_norm / n_clusters;
    r.s3 += rb.s3_norm / n_clusters;
    r.clusters.push_back(ce);
  }
  return r;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  return run_experiment(spec, make_binding(spec));
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const PolicyBinding& binding) {
  spec.validate();
  binding.validate();
  const std::size_t n_seeds = spec.seeds.size();
  const std::size_t n_tasks = n_seeds * static_cast<std::size_t>(spec.episodes);
  ExperimentResult out;
  out.episodes.resize(n_tasks);
  const bool keep = spec.dump_trajectory && !spec.output_dir.empty();

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= n_tasks) return;
      try {
        out.episodes[k] = run_episode(spec.system, binding, spec.seeds[k / spec.episodes],
                                      static_cast<int>(k % spec.episodes), keep);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n_tasks;
        return;
      }
    }
  };
  const int workers = std::min<int>(spec.workers, static_cast<int>(n_tasks));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ResultRow& row = out.row;
  row.policy = policy_name(spec.policy);
  row.mode = mode_name(spec.system.mode);
  row.n_clusters = spec.system.n_clusters;
  row.budget = spec.system.budget;
  row.alpha2 = spec.system.alpha2;
  row.alpha3_true = spec.system.alpha3_true;
  row.episodes = spec.episodes;
  row.seeds = static_cast<int>(n_seeds);

  std::vector<double> seed_means(n_seeds, 0.0);
  long days = 0;
  long tests = 0;
  long demand_evals = 0;
  long policy_evals = 0;
  double lat_sum = 0.0;
  double lat_sq = 0.0;
  for (std::size_t k = 0; k < n_tasks; ++k) {
    const auto& e = out.episodes[k];
    seed_means[k / spec.episodes] += e.episode_return / spec.episodes;
    row.s1 += e.s1 / static_cast<double>(n_tasks);
    row.s2 += e.s2 / static_cast<double>(n_tasks);
    row.s3 += e.s3 / static_cast<double>(n_tasks);
    days += e.days;
    tests += e.tests;
    row.budget_violations += e.budget_violations;
    for (const auto& s : e.steps) {
      demand_evals += s.decision.demand_evaluations;
      policy_evals += s.decision.policy_evaluations;
      if (s.decision.candidates > 0) {
        const double ms = 1e3 * s.decision.decision_seconds;
        lat_sum += ms;
        lat_sq += ms * ms;
        ++out.latency.decisions;
      }
    }
  }
  for (double m : seed_means) row.mean_return += m / static_cast<double>(n_seeds);
  if (n_seeds > 1) {
    double ss = 0.0;
    for (double m : seed_means) ss += (m - row.mean_return) * (m - row.mean_return);
    row.std_return = std::sqrt(ss / static_cast<double>(n_seeds - 1));
  }
  if (days > 0) {
    row.tests_per_step = static_cast<double>(tests) / static_cast<double>(days);
    row.demand_evaluations_per_step = static_cast<double>(demand_evals) / static_cast<double>(days);
    row.policy_evaluations_per_step = static_cast<double>(policy_evals) / static_cast<double>(days);
  }
  if (out.latency.decisions > 0) {
    const double n = static_cast<double>(out.latency.decisions);
    out.latency.mean_ms = lat_sum / n;
    out.latency.std_ms = std::sqrt(std::max(0.0, lat_sq / n - out.latency.mean_ms * out.latency.mean_ms));
  }
  if (!spec.output_dir.empty()) write_outputs(spec.output_dir, spec, out);
  return out;
}

json to_json(const ResultRow& r) {
  return json{{"policy", r.policy},
              {"mode", r.mode},
              {"n_clusters", r.n_clusters},
              {"budget", r.budget},
              {"alpha2", r.alpha2},
              {"alpha3_true", r.alpha3_true},
              {"episodes", r.episodes},
              {"seeds", r.seeds},
              {"mean_return", r.mean_return},
              {"std_return", r.std_return},
              {"s1", r.s1},
              {"s2", r.s2},
              {"s3", r.s3},
              {"tests_per_step", r.tests_per_step},
              {"demand_evaluations_per_step", r.demand_evaluations_per_step},
              {"policy_evaluations_per_step", r.policy_evaluations_per_step},
              {"budget_violations", r.budget_violations}};
}

json to_json(const LatencyStats& l) {
  return json{{"mean_ms", l.mean_ms}, {"std_ms", l.std_ms}, {"decisions", l.decisions}};
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw InputError("cannot write " + p.string());
  return out;
}

}  // namespace

const std::vector<std::string>& trajectory_columns() {
  static const std::vector<std::string> cols = {
      "seed",     "episode",  "day",   "cluster", "local_day", "individual",
      "infected", "infectious", "symptom", "result", "q_now",   "delta_q",
      "test",     "quarantine", "s1",  "s2",      "s3",     "reward"};
  static const std::vector<std::string> all = [] {
    auto c = cols;
    for (const auto& o : local_obs_columns()) c.push_back(std::string("obs_") + o);
    return c;
  }();
  return all;
}

void write_outputs(const std::string& dir, const ExperimentSpec& spec,
                   const ExperimentResult& result) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir + ": " + ec.message());
  const fs::path root(dir);

  json summary{{"schema_version", kResultSchemaVersion},
               {"config", to_json(spec)},
               {"result", to_json(result.row)},
               {"timing", to_json(result.latency)}};
  write_json_file((root / "summary.json").string(), summary);

  {
    auto out = open_csv(root / "result.csv");
    const json r = to_json(result.row);
    bool first = true;
    for (const auto& item : r.items()) {
      out << (first ? "" : ",") << item.key();
      first = false;
    }
    out << '\n';
    first = true;
    for (const auto& item : r.items()) {
      out << (first ? "" : ",");
      if (item.value().is_string()) out << item.value().get<std::string>();
      else if (item.value().is_number_float()) out << num(item.value().get<double>());
      else out << item.value().dump();
      first = false;
    }
    out << '\n';
  }
  {
    auto out = open_csv(root / "clusters.csv");
    out << "seed,episode,cluster,size,activation_day,s1,s2,s3,s1_norm,s2_norm,s3_norm,reward\n";
    for (const auto& e : result.episodes) {
      for (const auto& c : e.clusters) {
        const double n = c.size;
        out << c.seed << ',' << c.episode << ',' << c.cluster << ',' << c.size << ','
            << c.activation_day << ',' << c.s1 << ',' << c.s2 << ',' << c.s3 << ','
            << num(c.s1 / n) << ',' << num(c.s2 / n) << ',' << num(c.s3 / n) << ','
            << num(c.reward) << '\n';
      }
    }
  }
  {
    auto out = open_csv(root / "steps.csv");
    out << "seed,episode,day,active_clusters,budget,multiplier,candidates,demand,executed,"
           "demand_evaluations,policy_evaluations,reward\n";
    for (const auto& e : result.episodes) {
      for (const auto& s : e.steps) {
        const auto& d = s.decision;
        out << e.seed << ',' << e.episode << ',' << s.day << ',' << s.active_clusters << ','
            << d.budget << ',' << num(d.multiplier) << ',' << d.candidates << ',' << d.demand << ','
            << d.executed << ',' << d.demand_evaluations << ',' << d.policy_evaluations << ','
            << num(s.reward) << '\n';
      }
    }
  }
  if (spec.dump_trajectory) {
    auto out = open_csv(root / "trajectory.csv");
    const auto& cols = trajectory_columns();
    for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
    out << '\n';
    const double a2 = spec.system.alpha2;
    const double a3 = spec.system.alpha3_true;
    for (const auto& e : result.episodes) {
      std::map<int, int> sizes;
      for (const auto& c : e.clusters) sizes[c.cluster] = c.size;
      auto reward_of = [&](const IndividualDayRecord& r) {
        return -(r.s1 + a2 * r.s2 + a3 * r.s3) / static_cast<double>(sizes[r.cluster]);
      };
      for (const auto& day : e.trajectory) {
        for (const auto& r : day.individuals) {
          out << e.seed << ',' << e.episode << ',' << day.day << ',' << r.cluster << ','
              << r.local_day << ',' << r.individual << ',' << r.infected << ',' << r.infectious
              << ',' << r.symptom << ',' << r.result << ',' << num(r.q_now) << ','
              << num(r.delta_q) << ',' << r.test << ',' << r.quarantine << ',' << r.s1 << ','
              << r.s2 << ',' << r.s3 << ',' << num(reward_of(r)) ;
          for (std::size_t k = 0; k < kLocalObsDim; ++k) out << ',' << num(r.obs[k]);
          out << '\n';
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<LatencyRow> bench_latency(const BenchSpec& spec,
                                      const std::vector<PolicyBinding>& bindings) {
  if (bindings.empty()) throw ParameterError("bench_latency needs at least one policy");
  if (spec.episodes < 1) throw ParameterError("episodes must be >= 1");
  std::vector<LatencyRow> rows;
  for (int c : spec.cluster_counts) {
    for (double f : spec.budget_per_cluster) {
      SystemConfig cfg = spec.base;
      cfg.n_clusters = c;
      cfg.n_max = std::max(cfg.n_max, c);
      cfg.epi.cluster_size_max = std::max(cfg.epi.cluster_size_max, spec.cluster_size);
      cfg.fixed_cluster_size = spec.cluster_size;
      cfg.budget = static_cast<int>(std::lround(f * c));
      double first_mean = 0.0;
      for (std::size_t b = 0; b < bindings.size(); ++b) {
        LatencyRow row;
        row.n_clusters = c;
        row.budget = cfg.budget;
        row.policy = policy_name(bindings[b].kind);
        double sum = 0.0, sq = 0.0;
        long days = 0;
        long demand = 0, policy = 0;
        for (int e = 0; e < spec.episodes; ++e) {
          const auto ep = run_episode(cfg, bindings[b], spec.seed, e, false);
          for (const auto& s : ep.steps) {
            if (s.decision.candidates == 0) continue;
            const double ms = 1e3 * s.decision.decision_seconds;
            sum += ms;
            sq += ms * ms;
            demand += s.decision.demand_evaluations;
            policy += s.decision.policy_evaluations;
            ++days;
          }
        }
        if (days > 0) {
          row.latency.decisions = days;
          row.latency.mean_ms = sum / days;
          row.latency.std_ms = std::sqrt(std::max(0.0, sq / days - row.latency.mean_ms * row.latency.mean_ms));
          row.demand_evaluations_per_step = static_cast<double>(demand) / days;
          row.policy_evaluations_per_step = static_cast<double>(policy) / days;
        }
        if (b == 0) first_mean = row.latency.mean_ms;
        row.speedup_vs_first = row.latency.mean_ms > 0.0 ? first_mean / row.latency.mean_ms : 1.0;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

std::vector<SweepRow> sweep_monotonicity(const QEstimator& est, const ClusterEnvSpec& env,
                                         double alpha2, const std::vector<double>& alpha3_grid,
                                         int episodes, std::uint64_t seed, int buckets) {
  std::vector<SweepRow> rows;
  for (double a3 : alpha3_grid) {
    const auto ev = evaluate_single_cluster(est, env, alpha2, a3, episodes, seed,
                                            SingleClusterRule::kGreedy, buckets);
    rows.push_back({a3, 0, ev.mean_tests_per_step, ev.mean_return});
    for (std::size_t b = 0; b < ev.bucket_upper.size(); ++b) {
      rows.push_back({a3, ev.bucket_upper[b], ev.bucket_tests_per_step[b], 0.0});
    }
  }
  return rows;
}

Inversions count_inversions(const std::vector<double>& curve) {
  Inversions inv;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    if (curve[k] > curve[k - 1]) {
      ++inv.count;
      const double base = std::abs(curve[k - 1]);
      const double rel = base > 0.0 ? (curve[k] - curve[k - 1]) / base
                                    : std::numeric_limits<double>::infinity();
      inv.max_relative = std::max(inv.max_relative, rel);
    }
  }
  return inv;
}

std::string output_root() {
  const char* v = std::getenv(kOutputRootEnv);
  return v != nullptr && *v != '\0' ? std::string(v) : std::string("outputs");
}

}  // namespace outbreak
