// Command-line front end: experiments, training, benchmarks, sweeps and the
// session service.
//
// Exit codes: 0 success, 1 I/O or other runtime failure, 2 invalid
// configuration or arguments, 3 invariant violation (budget exceeded,
// illegal state transition, diverged training).

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "outbreak/checkpoint.hpp"
#include "outbreak/config.hpp"
#include "outbreak/dqn.hpp"
#include "outbreak/errors.hpp"
#include "outbreak/harness.hpp"
#include "outbreak/ppo.hpp"
#include "outbreak/service.hpp"

using namespace outbreak;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;

struct InvariantBroken : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ExperimentSpec load_spec(const std::string& path) {
  if (path.empty()) return {};
  return experiment_from_json(read_json_file(path));
}

std::string default_dir(const std::string& name) { return (fs::path(output_root()) / name).string(); }

std::string hash_hex(const json& doc) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(content_hash(doc)));
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --------------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::string policy;
  int episodes = 0;
  std::vector<std::uint64_t> seeds;
  int workers = 0;
  std::string value_checkpoint;
  std::string ppo_checkpoint;
  double fixed_m = -1.0;
  double alpha3_true = -1.0;
  int budget = -1;
  std::string output;
  bool dump_trajectory = false;
};

int cmd_run(const RunArgs& a) {
  ExperimentSpec spec = load_spec(a.config);
  if (!a.policy.empty()) spec.policy = parse_policy(a.policy);
  if (a.episodes > 0) spec.episodes = a.episodes;
  if (!a.seeds.empty()) spec.seeds = a.seeds;
  if (a.workers > 0) spec.workers = a.workers;
  if (!a.value_checkpoint.empty()) spec.value_checkpoint = a.value_checkpoint;
  if (!a.ppo_checkpoint.empty()) spec.ppo_checkpoint = a.ppo_checkpoint;
  if (a.fixed_m >= 0.0) spec.fixed_m = a.fixed_m;
  if (a.alpha3_true >= 0.0) spec.system.alpha3_true = a.alpha3_true;
  if (a.budget >= 0) spec.system.budget = a.budget;
  spec.dump_trajectory = spec.dump_trajectory || a.dump_trajectory;
  spec.output_dir = a.output.empty()
                        ? default_dir("run-" + policy_name(spec.policy) + "-" + hash_hex(to_json(spec)))
                        : a.output;
  const auto result = run_experiment(spec);
  std::cout << to_json(result.row).dump(2) << "\n";
  std::cerr << "wrote " << spec.output_dir << "\n";
  if (result.row.budget_violations > 0) {
    throw InvariantBroken("budget exceeded on " + std::to_string(result.row.budget_violations) +
                          " steps");
  }
  return 0;
}

struct TrainQArgs {
  std::string config;
  std::string system;
  long steps = 0;
  std::uint64_t seed = 0;
  double alpha3_min = -1.0;
  double alpha3_max = -1.0;
  bool joint_alpha2 = false;
  double alpha2 = -1.0;
  std::string out;
};

int cmd_train_q(const TrainQArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : train_config_from_json(read_json_file(a.config));
  if (a.steps > 0) cfg.total_steps = a.steps;
  if (a.seed > 0) cfg.seed = a.seed;
  if (a.alpha3_min >= 0.0) cfg.alpha3_min = a.alpha3_min;
  if (a.alpha3_max >= 0.0) cfg.alpha3_max = a.alpha3_max;
  if (a.alpha2 >= 0.0) cfg.alpha2 = a.alpha2;
  if (a.joint_alpha2) cfg.joint_alpha2 = true;
  cfg.validate();
  ClusterEnvSpec env;
  if (!a.system.empty()) env.epi = load_spec(a.system).system.epi;
  const std::string out = a.out.empty() ? default_dir("checkpoints/value-" + hash_hex(to_json(cfg)) + ".json") : a.out;
  auto result = td_train(cfg, env, [](const TrainStats& s) {
    std::cerr << "step " << s.steps << " updates " << s.updates << " td " << s.last_td_loss
              << " penalty " << s.last_penalty << "\n";
  });
  fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
  save_checkpoint(out, make_checkpoint(result.estimator, to_json(cfg), result.rng_state));
  std::cout << json{{"checkpoint", out},
                    {"steps", result.stats.steps},
                    {"updates", result.stats.updates},
                    {"episodes", result.stats.episodes},
                    {"td_loss", result.stats.last_td_loss},
                    {"penalty", result.stats.last_penalty}}
                   .dump(2)
            << "\n";
  return 0;
}

struct TrainPpoArgs {
  std::string config;
  std::string system;
  std::string value_checkpoint;
  long steps = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_train_ppo(const TrainPpoArgs& a) {
  PpoConfig cfg = a.config.empty() ? PpoConfig{} : ppo_config_from_json(read_json_file(a.config));
  if (a.steps > 0) cfg.total_steps = a.steps;
  if (a.seed > 0) cfg.seed = a.seed;
  cfg.validate();
  ExperimentSpec spec = load_spec(a.system);
  spec.policy = PolicyKind::kFixedMQr;
  spec.value_checkpoint = a.value_checkpoint;
  const auto binding = make_binding(spec);
  const std::string out = a.out.empty() ? default_dir("checkpoints/ppo-" + hash_hex(to_json(cfg)) + ".json") : a.out;
  auto result = ppo_train(cfg, spec.system, binding.estimator, [](const PpoStats& s) {
    std::cerr << "step " << s.steps << " iter " << s.iterations << " return "
              << s.mean_episode_return << " kl " << s.last_kl << "\n";
  });
  fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
  save_checkpoint(out, make_checkpoint(*result.policy, to_json(cfg), result.rng_state));
  std::cout << json{{"checkpoint", out},
                    {"steps", result.stats.steps},
                    {"iterations", result.stats.iterations},
                    {"mean_episode_return", result.stats.mean_episode_return},
                    {"early_stops", result.stats.early_stops}}
                   .dump(2)
            << "\n";
  return 0;
}

struct BenchArgs {
  std::string config;
  std::vector<int> clusters;
  std::vector<double> budget_per_cluster;
  int cluster_size = 0;
  int episodes = 0;
  std::uint64_t seed = 1;
  std::vector<std::string> policies;
  std::string value_checkpoint;
  std::string ppo_checkpoint;
  std::string output;
};

int cmd_bench(const BenchArgs& a) {
  ExperimentSpec spec = load_spec(a.config);
  if (!a.value_checkpoint.empty()) spec.value_checkpoint = a.value_checkpoint;
  if (!a.ppo_checkpoint.empty()) spec.ppo_checkpoint = a.ppo_checkpoint;
  BenchSpec bench;
  bench.base = spec.system;
  bench.seed = a.seed;
  if (!a.clusters.empty()) bench.cluster_counts = a.clusters;
  if (!a.budget_per_cluster.empty()) bench.budget_per_cluster = a.budget_per_cluster;
  if (a.cluster_size > 0) bench.cluster_size = a.cluster_size;
  if (a.episodes > 0) bench.episodes = a.episodes;
  std::vector<std::string> names = a.policies;
  if (names.empty()) {
    names = {"bin-m-qr", "fixed-m-qr"};
    if (!spec.ppo_checkpoint.empty()) names.insert(names.begin(), "hier-ppo");
  }
  std::vector<PolicyBinding> bindings;
  for (const auto& n : names) {
    ExperimentSpec s = spec;
    s.policy = parse_policy(n);
    bindings.push_back(make_binding(s));
  }
  const auto rows = bench_latency(bench, bindings);
  const std::string dir = a.output.empty() ? default_dir("bench") : a.output;
  fs::create_directories(dir);
  std::ofstream csv(fs::path(dir) / "latency.csv");
  csv << "n_clusters,budget,policy,mean_ms,std_ms,decisions,demand_evaluations_per_step,"
         "policy_evaluations_per_step,speedup_vs_first\n";
  for (const auto& r : rows) {
    csv << r.n_clusters << ',' << r.budget << ',' << r.policy << ',' << fmt(r.latency.mean_ms) << ','
        << fmt(r.latency.std_ms) << ',' << r.latency.decisions << ','
        << fmt(r.demand_evaluations_per_step) << ',' << fmt(r.policy_evaluations_per_step) << ','
        << fmt(r.speedup_vs_first) << '\n';
    std::printf("C=%-3d B=%-4d %-12s %9.3f ms +- %8.3f  demand/step %6.2f  speedup %5.2fx\n",
                r.n_clusters, r.budget, r.policy.c_str(), r.latency.mean_ms, r.latency.std_ms,
                r.demand_evaluations_per_step, r.speedup_vs_first);
  }
  std::cerr << "wrote " << (fs::path(dir) / "latency.csv").string() << "\n";
  return 0;
}

struct SweepArgs {
  std::string config;
  std::string value_checkpoint;
  std::vector<double> alpha3 = {0.0, 0.02, 0.04, 0.06, 0.08, 0.1};
  int episodes = 500;
  std::uint64_t seed = 1;
  int size_min = 2;
  int size_max = 10;
  std::string output;
};

int cmd_sweep(const SweepArgs& a) {
  ExperimentSpec spec = load_spec(a.config);
  spec.value_checkpoint = a.value_checkpoint;
  spec.policy = PolicyKind::kFixedMQr;
  const auto binding = make_binding(spec);
  ClusterEnvSpec env{spec.system.epi, a.size_min, a.size_max};
  const auto rows = sweep_monotonicity(*binding.estimator, env, spec.system.alpha2, a.alpha3,
                                       a.episodes, a.seed);
  const std::string dir = a.output.empty() ? default_dir("sweep") : a.output;
  fs::create_directories(dir);
  std::ofstream csv(fs::path(dir) / "sweep.csv");
  csv << "alpha3,bucket_upper,tests_per_step,mean_return\n";
  std::vector<double> curve;
  for (const auto& r : rows) {
    csv << fmt(r.alpha3) << ',' << r.bucket_upper << ',' << fmt(r.tests_per_step) << ','
        << fmt(r.mean_return) << '\n';
    if (r.bucket_upper == 0) {
      curve.push_back(r.tests_per_step);
      std::printf("alpha3=%.3f tests/step=%.5f return=%.5f\n", r.alpha3, r.tests_per_step,
                  r.mean_return);
    }
  }
  const auto inv = count_inversions(curve);
  std::printf("inversions=%d max_relative=%.4f\n", inv.count, inv.max_relative);
  return 0;
}

struct ServeArgs {
  std::string config;
  std::string host = "127.0.0.1";
  int port = 8080;
  int max_sessions = 16;
  bool no_evict = false;
};

int cmd_serve(const ServeArgs& a) {
  ServiceConfig sc;
  sc.defaults = load_spec(a.config);
  sc.max_sessions = a.max_sessions;
  sc.evict_lru = !a.no_evict;
  SessionManager manager(sc);
  HttpService http(manager);
  std::cerr << "serving on http://" << a.host << ":" << a.port << "/v1\n";
  if (!http.listen(a.host, a.port)) {
    std::cerr << "error: cannot bind " << a.host << ":" << a.port << "\n";
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outbreak testing-allocation engine"};
  app.require_subcommand(1);

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run an experiment and write result files");
  r->add_option("-c,--config", run.config, "Config document (JSON)");
  r->add_option("--policy", run.policy, "Policy name");
  r->add_option("--episodes", run.episodes, "Episodes per seed");
  r->add_option("--seeds", run.seeds, "Seeds");
  r->add_option("--workers", run.workers, "Worker threads");
  r->add_option("--value-checkpoint", run.value_checkpoint, "Learned value checkpoint");
  r->add_option("--ppo-checkpoint", run.ppo_checkpoint, "Hier-PPO checkpoint");
  r->add_option("--fixed-m", run.fixed_m, "Multiplier for fixed-m-qr");
  r->add_option("--alpha3", run.alpha3_true, "True per-test cost");
  r->add_option("--budget", run.budget, "Tests per day");
  r->add_option("-o,--output", run.output, "Output directory");
  r->add_flag("--dump-trajectory", run.dump_trajectory, "Write trajectory.csv");

  TrainQArgs tq;
  auto* q = app.add_subcommand("train-q", "Train the cost-conditioned value estimator");
  q->add_option("-c,--config", tq.config, "Training config (JSON)");
  q->add_option("--system", tq.system, "Config document supplying epidemiological parameters");
  q->add_option("--steps", tq.steps, "Environment steps");
  q->add_option("--seed", tq.seed, "Seed");
  q->add_option("--alpha3-min", tq.alpha3_min, "Lower end of the sampled alpha3 range");
  q->add_option("--alpha3-max", tq.alpha3_max, "Upper end of the sampled alpha3 range");
  q->add_option("--alpha2", tq.alpha2, "Quarantine cost");
  q->add_flag("--joint-alpha2", tq.joint_alpha2, "Condition on alpha2 as well");
  q->add_option("-o,--out", tq.out, "Checkpoint path");

  TrainPpoArgs tp;
  auto* p = app.add_subcommand("train-ppo", "Train the Hier-PPO multiplier controller");
  p->add_option("-c,--config", tp.config, "PPO config (JSON)");
  p->add_option("--system", tp.system, "Config document for the training environment");
  p->add_option("--value-checkpoint", tp.value_checkpoint, "Learned value checkpoint (default analytic)");
  p->add_option("--steps", tp.steps, "Environment steps");
  p->add_option("--seed", tp.seed, "Seed");
  p->add_option("-o,--out", tp.out, "Checkpoint path");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Decision latency of the multiplier controllers");
  b->add_option("-c,--config", bench.config, "Config document");
  b->add_option("--clusters", bench.clusters, "Cluster counts");
  b->add_option("--budget-per-cluster", bench.budget_per_cluster, "Budgets as multiples of C");
  b->add_option("--cluster-size", bench.cluster_size, "Cluster size");
  b->add_option("--episodes", bench.episodes, "Episodes per cell");
  b->add_option("--seed", bench.seed, "Seed");
  b->add_option("--policies", bench.policies, "Policies to time; the first is the reference");
  b->add_option("--value-checkpoint", bench.value_checkpoint, "Learned value checkpoint");
  b->add_option("--ppo-checkpoint", bench.ppo_checkpoint, "Hier-PPO checkpoint");
  b->add_option("-o,--output", bench.output, "Output directory");

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "Tests per step across a grid of test costs");
  s->add_option("-c,--config", sweep.config, "Config document");
  s->add_option("--value-checkpoint", sweep.value_checkpoint, "Learned value checkpoint");
  s->add_option("--alpha3", sweep.alpha3, "Test-cost grid");
  s->add_option("--episodes", sweep.episodes, "Episodes per grid point");
  s->add_option("--seed", sweep.seed, "Seed");
  s->add_option("--size-min", sweep.size_min, "Smallest cluster");
  s->add_option("--size-max", sweep.size_max, "Largest cluster");
  s->add_option("-o,--output", sweep.output, "Output directory");

  ServeArgs serve;
  auto* v = app.add_subcommand("serve", "Serve simulation sessions over HTTP");
  v->add_option("-c,--config", serve.config, "Default config document");
  v->add_option("--host", serve.host, "Bind address");
  v->add_option("--port", serve.port, "Port");
  v->add_option("--max-sessions", serve.max_sessions, "Session cap");
  v->add_flag("--no-evict", serve.no_evict, "Refuse new sessions at the cap instead of evicting");

  CLI11_PARSE(app, argc, argv);

  try {
    if (r->parsed()) return cmd_run(run);
    if (q->parsed()) return cmd_train_q(tq);
    if (p->parsed()) return cmd_train_ppo(tp);
    if (b->parsed()) return cmd_bench(bench);
    if (s->parsed()) return cmd_sweep(sweep);
    if (v->parsed()) return cmd_serve(serve);
  } catch (const BudgetViolation& ex) {
    std::cerr << "invariant violation: " << ex.what() << "\n";
    return kExitInvariant;
  } catch (const StateError& ex) {
    std::cerr << "invariant violation: " << ex.what() << "\n";
    return kExitInvariant;
  } catch (const TrainingDiverged& ex) {
    std::cerr << "invariant violation: " << ex.what() << "\n";
    return kExitInvariant;
  } catch (const InvariantBroken& ex) {
    std::cerr << "invariant violation: " << ex.what() << "\n";
    return kExitInvariant;
  } catch (const ParameterError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const InputError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
