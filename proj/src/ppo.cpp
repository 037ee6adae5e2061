#include "outbreak/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <random>
#include <sstream>

#include "outbreak/dqn.hpp"
#include "outbreak/engine.hpp"
#include "outbreak/errors.hpp"
#include "outbreak/rng.hpp"

namespace outbreak {

using nlohmann::json;

void PpoConfig::validate() const {
  if (n_parallel_envs < 1) throw ParameterError("n_parallel_envs must be >= 1");
  if (rollout_len < 1) throw ParameterError("rollout_len must be >= 1");
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  if (minibatch < 1) throw ParameterError("minibatch must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in (0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ParameterError("gae_lambda must lie in [0, 1]");
  if (!(clip > 0.0)) throw ParameterError("clip must be > 0");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
  if (!(m_min < m_max)) throw ParameterError("m_min must be < m_max");
  if (!(budget_min_per_cluster >= 0.0 && budget_min_per_cluster <= budget_max_per_cluster)) {
    throw ParameterError("bad budget randomization range");
  }
  if (total_steps < 1) throw ParameterError("total_steps must be >= 1");
}

json to_json(const PpoConfig& c) {
  return json{{"n_parallel_envs", c.n_parallel_envs},
              {"rollout_len", c.rollout_len},
              {"epochs", c.epochs},
              {"minibatch", c.minibatch},
              {"gamma", c.gamma},
              {"gae_lambda", c.gae_lambda},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"clip", c.clip},
              {"value_coef", c.value_coef},
              {"entropy_coef", c.entropy_coef},
              {"kl_stop", c.kl_stop},
              {"grad_clip", c.grad_clip},
              {"m_min", c.m_min},
              {"m_max", c.m_max},
              {"total_steps", c.total_steps},
              {"budget_min_per_cluster", c.budget_min_per_cluster},
              {"budget_max_per_cluster", c.budget_max_per_cluster},
              {"seed", c.seed}};
}

PpoConfig ppo_config_from_json(const json& d) {
  PpoConfig c;
  c.n_parallel_envs = d.value("n_parallel_envs", c.n_parallel_envs);
  c.rollout_len = d.value("rollout_len", c.rollout_len);
  c.epochs = d.value("epochs", c.epochs);
  c.minibatch = d.value("minibatch", c.minibatch);
  c.gamma = d.value("gamma", c.gamma);
  c.gae_lambda = d.value("gae_lambda", c.gae_lambda);
  c.learning_rate = d.value("learning_rate", c.learning_rate);
  c.weight_decay = d.value("weight_decay", c.weight_decay);
  c.clip = d.value("clip", c.clip);
  c.value_coef = d.value("value_coef", c.value_coef);
  c.entropy_coef = d.value("entropy_coef", c.entropy_coef);
  c.kl_stop = d.value("kl_stop", c.kl_stop);
  c.grad_clip = d.value("grad_clip", c.grad_clip);
  c.m_min = d.value("m_min", c.m_min);
  c.m_max = d.value("m_max", c.m_max);
  c.total_steps = d.value("total_steps", c.total_steps);
  c.budget_min_per_cluster = d.value("budget_min_per_cluster", c.budget_min_per_cluster);
  c.budget_max_per_cluster = d.value("budget_max_per_cluster", c.budget_max_per_cluster);
  c.seed = d.value("seed", c.seed);
  return c;
}

namespace {

struct Worker {
  int id = 0;
  std::int64_t episode = 0;
  std::int64_t steps = 0;
  double episode_return = 0.0;
  std::unique_ptr<Engine> engine;
};

struct Rollout {
  std::vector<GlobalObs> obs;
  std::vector<double> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> finished_returns;
  double last_value = 0.0;
};

void reset(Worker& w, const PpoConfig& cfg, const SystemConfig& env, const PolicyBinding& binding) {
  const std::uint64_t s = derive_seed(cfg.seed, static_cast<std::uint64_t>(w.id) + 1,
                                      static_cast<std::uint64_t>(w.episode));
  SystemConfig sc = env;
  CounterStream draw(s, 0, kNoIndividual, 0, Channel::kBudget);
  const double per = cfg.budget_min_per_cluster +
                     (cfg.budget_max_per_cluster - cfg.budget_min_per_cluster) * draw.uniform();
  sc.budget = static_cast<int>(std::lround(per * env.n_clusters));
  if (sc.nominal_budget == 0) sc.nominal_budget = std::max(1, env.budget);
  w.engine = std::make_unique<Engine>(sc, s, binding, false);
  w.episode_return = 0.0;
}

Rollout collect(Worker& w, const PpoPolicy& policy, const PpoConfig& cfg, const SystemConfig& env,
                const PolicyBinding& binding, int len) {
  Rollout r;
  for (int t = 0; t < len; ++t) {
    if (!w.engine || w.engine->done()) {
      if (w.engine) ++w.episode;
      reset(w, cfg, env, binding);
    }
    GlobalObs g = w.engine->observe_global();
    const PolicyOutput out = policy.evaluate(g);
    CounterStream noise(cfg.seed, static_cast<std::uint32_t>(w.id), kNoIndividual,
                        static_cast<std::uint32_t>(w.steps), Channel::kTraining);
    ++w.steps;
    const double u = out.mean_u + std::exp(out.log_std) * noise.normal();
    StepOverride ov;
    ov.multiplier = policy.multiplier(u);
    const DayRecord rec = w.engine->step(ov);
    double reward = 0.0;
    for (const auto& cr : rec.step.rewards) reward += cr.reward;
    w.episode_return += reward;
    const bool done = w.engine->done();
    r.obs.push_back(std::move(g));
    r.actions.push_back(u);
    r.log_probs.push_back(gaussian_log_prob(u, out.mean_u, out.log_std));
    r.values.push_back(out.value);
    r.rewards.push_back(reward);
    r.dones.push_back(done ? 1 : 0);
    if (done) r.finished_returns.push_back(w.episode_return);
  }
  r.last_value = w.engine->done() ? 0.0 : policy.evaluate(w.engine->observe_global()).value;
  return r;
}

}  // namespace

PpoResult ppo_train(const PpoConfig& cfg, const SystemConfig& env,
                    std::shared_ptr<const QEstimator> estimator, const PpoProgress& progress) {
  cfg.validate();
  env.validate();
  if (!estimator) throw ParameterError("ppo_train needs a value estimator");

  PpoNetSpec spec;
  spec.range = {cfg.m_min, cfg.m_max};
  auto policy = std::make_shared<PpoPolicy>(spec);
  std::mt19937_64 rng(mix64(cfg.seed ^ 0x9907ULL));
  policy->init(rng);

  PolicyBinding binding;
  binding.kind = PolicyKind::kFixedMQr;  // the multiplier arrives as an override every step
  binding.estimator = std::move(estimator);
  binding.range = spec.range;
  binding.fixed_m = std::clamp(1.0, cfg.m_min, cfg.m_max);

  std::vector<Worker> workers(static_cast<std::size_t>(cfg.n_parallel_envs));
  for (int k = 0; k < cfg.n_parallel_envs; ++k) workers[static_cast<std::size_t>(k)].id = k;

  nn::Adam opt;
  opt.weight_decay = cfg.weight_decay;
  opt.reset(policy->num_params());
  RunningMoments adv_moments;
  PpoStats st;
  const std::int64_t per_iter = static_cast<std::int64_t>(cfg.rollout_len) * cfg.n_parallel_envs;
  const std::int64_t iterations = std::max<std::int64_t>(1, (cfg.total_steps + per_iter - 1) / per_iter);

  for (std::int64_t it = 0; it < iterations; ++it) {
    // Workers only read the policy while collecting.
    std::vector<std::future<Rollout>> futures;
    std::vector<Rollout> rollouts(workers.size());
    if (workers.size() > 1) {
      for (auto& w : workers) {
        futures.push_back(std::async(std::launch::async, [&, wp = &w] {
          return collect(*wp, *policy, cfg, env, binding, cfg.rollout_len);
        }));
      }
      for (std::size_t k = 0; k < futures.size(); ++k) rollouts[k] = futures[k].get();
    } else {
      rollouts[0] = collect(workers[0], *policy, cfg, env, binding, cfg.rollout_len);
    }

    PpoPolicy::Batch all;
    std::vector<double> finished;
    for (auto& r : rollouts) {
      std::vector<double> adv, ret;
      compute_gae(r.rewards, r.values, r.dones, r.last_value, cfg.gamma, cfg.gae_lambda, adv, ret);
      for (std::size_t t = 0; t < r.obs.size(); ++t) {
        all.obs.push_back(&r.obs[t]);
        all.actions.push_back(r.actions[t]);
        all.old_log_probs.push_back(r.log_probs[t]);
        all.advantages.push_back(adv[t]);
        all.returns.push_back(ret[t]);
      }
      finished.insert(finished.end(), r.finished_returns.begin(), r.finished_returns.end());
    }
    adv_moments.update(all.advantages);
    const double sd = std::sqrt(adv_moments.variance() + 1e-8);
    for (double& a : all.advantages) a = (a - adv_moments.mean) / sd;

    const std::size_t n = all.obs.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const double lr = nn::cosine_lr(it, iterations, 0, cfg.learning_rate, 0.1 * cfg.learning_rate);
    bool stop = false;
    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.minibatch)) {
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.minibatch));
        PpoPolicy::Batch mb;
        for (std::size_t j = start; j < end; ++j) {
          const std::size_t k = idx[j];
          mb.obs.push_back(all.obs[k]);
          mb.actions.push_back(all.actions[k]);
          mb.old_log_probs.push_back(all.old_log_probs[k]);
          mb.advantages.push_back(all.advantages[k]);
          mb.returns.push_back(all.returns[k]);
        }
        nn::Vec grad;
        const auto ls = policy->loss_and_grad(mb, cfg.clip, cfg.value_coef, cfg.entropy_coef, grad);
        if (!std::isfinite(ls.policy_loss) || !std::isfinite(ls.value_loss) || !grad.allFinite()) {
          std::ostringstream msg;
          msg << "PPO training diverged at iteration " << it << ": policy_loss=" << ls.policy_loss
              << " value_loss=" << ls.value_loss;
          throw TrainingDiverged(msg.str());
        }
        nn::clip_grad_norm(grad, cfg.grad_clip);
        opt.step(policy->theta(), grad, lr);
        st.last_policy_loss = ls.policy_loss;
        st.last_value_loss = ls.value_loss;
        st.last_kl = ls.approx_kl;
        if (ls.approx_kl > cfg.kl_stop) {
          ++st.early_stops;
          stop = true;
          break;
        }
      }
    }
    st.steps += static_cast<std::int64_t>(n);
    ++st.iterations;
    st.episodes += static_cast<std::int64_t>(finished.size());
    if (!finished.empty()) {
      st.mean_episode_return =
          std::accumulate(finished.begin(), finished.end(), 0.0) / static_cast<double>(finished.size());
    }
    if (progress) progress(st);
  }
  std::ostringstream rs;
  rs << rng;
  policy->evaluation_count = 0;
  return {policy, st, rs.str()};
}

Checkpoint make_checkpoint(const PpoPolicy& policy, const json& train_config,
                           const std::string& rng_state) {
  Checkpoint c;
  c.backend = "hier-ppo";
  const auto& s = policy.spec();
  c.model = json{{"encoder_hidden", s.encoder_hidden},
                 {"trunk_hidden", s.trunk_hidden},
                 {"init_log_std", s.init_log_std},
                 {"m_min", s.range.m_min},
                 {"m_max", s.range.m_max},
                 {"global_dim", kGlobalDim},
                 {"cluster_dim", kClusterDim}};
  c.train_config = train_config;
  c.theta = policy.theta();
  c.rng_state = rng_state;
  return c;
}

std::shared_ptr<PpoPolicy> ppo_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.backend != "hier-ppo") {
    throw InputError("checkpoint backend '" + ckpt.backend + "' is not a PPO controller");
  }
  PpoNetSpec s;
  try {
    s.encoder_hidden = ckpt.model.at("encoder_hidden").get<int>();
    s.trunk_hidden = ckpt.model.at("trunk_hidden").get<int>();
    s.init_log_std = ckpt.model.value("init_log_std", s.init_log_std);
    s.range.m_min = ckpt.model.at("m_min").get<double>();
    s.range.m_max = ckpt.model.at("m_max").get<double>();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed PPO checkpoint: ") + e.what());
  }
  auto p = std::make_shared<PpoPolicy>(s);
  if (p->theta().size() != ckpt.theta.size()) {
    throw InputError("PPO checkpoint parameters do not match the recorded architecture");
  }
  p->theta() = ckpt.theta;
  return p;
}

}  // namespace outbreak
