#include "outbreak/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "outbreak/belief.hpp"
#include "outbreak/errors.hpp"
#include "outbreak/objective.hpp"
#include "outbreak/rng.hpp"
#include "outbreak/sim.hpp"

namespace outbreak {

using nlohmann::json;

void TrainConfig::validate() const {
  if (total_steps < 1) throw ParameterError("total_steps must be >= 1");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (replay_capacity < batch_size) throw ParameterError("replay_capacity must be >= batch_size");
  if (train_every < 1) throw ParameterError("train_every must be >= 1");
  if (!(g_target < 0.0)) throw ParameterError("g_target must be < 0");
  if (!(eps_end <= eps_start)) throw ParameterError("eps_end must be <= eps_start");
  if (!(eps_fraction > 0.0 && eps_fraction <= 1.0)) throw ParameterError("eps_fraction must lie in (0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in (0, 1)");
  if (!(lambda_gp >= 0.0)) throw ParameterError("lambda_gp must be >= 0");
  if (!(alpha3_min >= 0.0 && alpha3_min <= alpha3_max)) throw ParameterError("bad alpha3 range");
  if (!(alpha2 >= 0.0)) throw ParameterError("alpha2 must be >= 0");
  if (joint_alpha2 && !(alpha2_min >= 0.0 && alpha2_min <= alpha2_max)) {
    throw ParameterError("bad alpha2 range");
  }
  if (target_update_period < 1) throw ParameterError("target_update_period must be >= 1");
  if (hidden < 1) throw ParameterError("hidden must be >= 1");
}

json to_json(const TrainConfig& c) {
  return json{{"total_steps", c.total_steps},
              {"replay_capacity", c.replay_capacity},
              {"batch_size", c.batch_size},
              {"train_every", c.train_every},
              {"learning_starts", c.learning_starts},
              {"base_lr", c.base_lr},
              {"min_lr", c.min_lr},
              {"warmup_updates", c.warmup_updates},
              {"grad_clip", c.grad_clip},
              {"eps_start", c.eps_start},
              {"eps_end", c.eps_end},
              {"eps_fraction", c.eps_fraction},
              {"target_update_period", c.target_update_period},
              {"gamma", c.gamma},
              {"lambda_gp", c.lambda_gp},
              {"g_target", c.g_target},
              {"alpha3_min", c.alpha3_min},
              {"alpha3_max", c.alpha3_max},
              {"alpha2", c.alpha2},
              {"joint_alpha2", c.joint_alpha2},
              {"alpha2_min", c.alpha2_min},
              {"alpha2_max", c.alpha2_max},
              {"hidden", c.hidden},
              {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& d) {
  TrainConfig c;
  c.total_steps = d.value("total_steps", c.total_steps);
  c.replay_capacity = d.value("replay_capacity", c.replay_capacity);
  c.batch_size = d.value("batch_size", c.batch_size);
  c.train_every = d.value("train_every", c.train_every);
  c.learning_starts = d.value("learning_starts", c.learning_starts);
  c.base_lr = d.value("base_lr", c.base_lr);
  c.min_lr = d.value("min_lr", c.min_lr);
  c.warmup_updates = d.value("warmup_updates", c.warmup_updates);
  c.grad_clip = d.value("grad_clip", c.grad_clip);
  c.eps_start = d.value("eps_start", c.eps_start);
  c.eps_end = d.value("eps_end", c.eps_end);
  c.eps_fraction = d.value("eps_fraction", c.eps_fraction);
  c.target_update_period = d.value("target_update_period", c.target_update_period);
  c.gamma = d.value("gamma", c.gamma);
  c.lambda_gp = d.value("lambda_gp", c.lambda_gp);
  c.g_target = d.value("g_target", c.g_target);
  c.alpha3_min = d.value("alpha3_min", c.alpha3_min);
  c.alpha3_max = d.value("alpha3_max", c.alpha3_max);
  c.alpha2 = d.value("alpha2", c.alpha2);
  c.joint_alpha2 = d.value("joint_alpha2", c.joint_alpha2);
  c.alpha2_min = d.value("alpha2_min", c.alpha2_min);
  c.alpha2_max = d.value("alpha2_max", c.alpha2_max);
  c.hidden = d.value("hidden", c.hidden);
  c.seed = d.value("seed", c.seed);
  return c;
}

double epsilon_at(const TrainConfig& c, std::int64_t step) {
  const double horizon = c.eps_fraction * static_cast<double>(c.total_steps);
  const double frac = std::min(1.0, static_cast<double>(step) / horizon);
  return c.eps_start + (c.eps_end - c.eps_start) * frac;
}

namespace {

class Replay {
 public:
  Replay(int dim, int capacity)
      : obs_(dim, capacity), next_(dim, capacity), action_(capacity), reward_(capacity),
        done_(capacity) {}

  void push(const nn::Vec& o, int a, double r, const nn::Vec& next, bool done) {
    obs_.col(head_) = o;
    next_.col(head_) = next;
    action_[static_cast<std::size_t>(head_)] = a;
    reward_[static_cast<std::size_t>(head_)] = r;
    done_[static_cast<std::size_t>(head_)] = done ? 1 : 0;
    head_ = (head_ + 1) % static_cast<int>(obs_.cols());
    size_ = std::min<int>(size_ + 1, static_cast<int>(obs_.cols()));
  }
  int size() const { return size_; }

  void sample(int n, std::mt19937_64& rng, nn::Mat& x, nn::Mat& xn, std::vector<int>& a,
              std::vector<double>& r, std::vector<std::uint8_t>& d) const {
    std::uniform_int_distribution<int> pick(0, size_ - 1);
    x.resize(obs_.rows(), n);
    xn.resize(obs_.rows(), n);
    a.resize(static_cast<std::size_t>(n));
    r.resize(static_cast<std::size_t>(n));
    d.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      const int k = pick(rng);
      x.col(j) = obs_.col(k);
      xn.col(j) = next_.col(k);
      a[static_cast<std::size_t>(j)] = action_[static_cast<std::size_t>(k)];
      r[static_cast<std::size_t>(j)] = reward_[static_cast<std::size_t>(k)];
      d[static_cast<std::size_t>(j)] = done_[static_cast<std::size_t>(k)];
    }
  }

 private:
  nn::Mat obs_;
  nn::Mat next_;
  std::vector<int> action_;
  std::vector<double> reward_;
  std::vector<std::uint8_t> done_;
  int head_ = 0;
  int size_ = 0;
};

// One single-cluster episode driven day by day.
struct Episode {
  ClusterState cluster;
  ClusterBeliefTracker tracker;
  std::uint64_t seed;
  double alpha2;
  double alpha3;

  Episode(std::shared_ptr<const LatentModel> model, const ClusterEnvSpec& env, std::uint64_t s,
          double a2, double a3)
      : cluster(spawn_cluster(s, env.epi, draw_size(env, s))),
        tracker(std::move(model), cluster.size),
        seed(s),
        alpha2(a2),
        alpha3(a3) {
    tracker.update(cluster);
  }

  static int draw_size(const ClusterEnvSpec& env, std::uint64_t s) {
    CounterStream draw(s, 0, kNoIndividual, 0, Channel::kClusterSize);
    return static_cast<int>(draw.uniform_int(env.size_min, env.size_max));
  }

  bool deciding(const EpiParams& epi) const {
    return cluster.current_day >= epi.decision_start_day;
  }

  std::vector<LocalObs> observe(const EpiParams& epi) const {
    std::vector<LocalObs> obs;
    obs.reserve(static_cast<std::size_t>(cluster.size));
    for (int i = 0; i < cluster.size; ++i) {
      obs.push_back(build_local(cluster.individuals[static_cast<std::size_t>(i)], tracker.record(i),
                                alpha3, cluster.current_day, epi));
    }
    return obs;
  }

  std::vector<BeliefContext> contexts() const {
    std::vector<BeliefContext> ctx;
    for (int i = 0; i < cluster.size; ++i) ctx.push_back({tracker.weights(i), cluster.current_day});
    return ctx;
  }

  /// Plays the current day; returns per-individual rewards in unnormalized
  /// units and the cluster outcome.
  ClusterStepOutcome play(const std::vector<std::uint8_t>& tests, const EpiParams& epi,
                          std::vector<double>* rewards) {
    const double thr = quarantine_threshold(alpha2);
    std::vector<IndividualAction> acts(static_cast<std::size_t>(cluster.size));
    const bool act = deciding(epi);
    for (int i = 0; i < cluster.size; ++i) {
      auto& a = acts[static_cast<std::size_t>(i)];
      if (act) {
        a.quarantine = tracker.record(i).q_now > thr;
        a.test = tests[static_cast<std::size_t>(i)] != 0;
      }
    }
    const int day = cluster.current_day;
    auto out = step_cluster(cluster, day, acts, epi, seed);
    if (rewards != nullptr) {
      rewards->assign(static_cast<std::size_t>(cluster.size), 0.0);
      for (int i = 0; i < cluster.size; ++i) {
        const auto& o = out.individuals[static_cast<std::size_t>(i)];
        (*rewards)[static_cast<std::size_t>(i)] =
            -((o.infectious_unquarantined ? 1.0 : 0.0) + alpha2 * (o.quarantined_uninfected ? 1.0 : 0.0) +
              alpha3 * (o.tested ? 1.0 : 0.0));
      }
    }
    if (!cluster.finished()) tracker.update(cluster);
    return out;
  }
};

}  // namespace

TrainResult td_train(const TrainConfig& cfg, const ClusterEnvSpec& env,
                     const TrainProgress& progress) {
  cfg.validate();
  env.epi.validate();
  LearnedSpec spec;
  spec.include_alpha2 = cfg.joint_alpha2;
  spec.hidden = cfg.hidden;
  spec.alpha2 = cfg.alpha2;
  spec.alpha3_min = cfg.alpha3_min;
  spec.alpha3_max = cfg.alpha3_max;
  LearnedEstimator est(spec);
  std::mt19937_64 rng(mix64(cfg.seed ^ 0x5eedULL));
  est.net().init(est.theta(), rng);
  nn::Vec target = est.theta();
  nn::Adam adam;
  adam.reset(est.net().num_params());

  const auto model = std::make_shared<const LatentModel>(env.epi);
  const int dim = est.input_dim();
  Replay replay(dim, cfg.replay_capacity);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TrainStats st;
  const std::int64_t total_updates =
      std::max<std::int64_t>(1, (cfg.total_steps - cfg.learning_starts) / cfg.train_every);
  nn::Mat x, xn;
  std::vector<int> a;
  std::vector<double> r;
  std::vector<std::uint8_t> d;
  nn::Vec grad(est.net().num_params());
  nn::Vec xi(dim), xn_i(dim);

  while (st.steps < cfg.total_steps) {
    const std::uint64_t ep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(st.episodes), 1);
    const double alpha3 = cfg.alpha3_min + (cfg.alpha3_max - cfg.alpha3_min) * unit(rng);
    const double alpha2 =
        cfg.joint_alpha2 ? cfg.alpha2_min + (cfg.alpha2_max - cfg.alpha2_min) * unit(rng) : cfg.alpha2;
    Episode ep(model, env, ep_seed, alpha2, alpha3);
    ++st.episodes;

    std::vector<LocalObs> obs;
    std::vector<std::uint8_t> tests;
    std::vector<double> rewards;
    while (!ep.cluster.finished() && st.steps < cfg.total_steps) {
      const bool deciding = ep.deciding(env.epi);
      tests.assign(static_cast<std::size_t>(ep.cluster.size), 0);
      if (deciding) {
        obs = ep.observe(env.epi);
        const double eps = epsilon_at(cfg, st.steps);
        std::vector<double> alpha2s(obs.size(), alpha2);
        const nn::Mat xin = est.encode_batch(obs, alpha2s);
        const nn::Mat q = est.net().forward(est.theta(), xin);
        for (std::size_t i = 0; i < obs.size(); ++i) {
          if (unit(rng) < eps) {
            tests[i] = unit(rng) < 0.5 ? 1 : 0;
          } else {
            tests[i] = q(1, static_cast<Eigen::Index>(i)) > q(0, static_cast<Eigen::Index>(i)) ? 1 : 0;
          }
        }
      }
      ep.play(tests, env.epi, &rewards);
      ++st.steps;
      if (deciding) {
        const bool done = ep.cluster.finished();
        std::vector<LocalObs> next;
        if (!done) next = ep.observe(env.epi);
        for (std::size_t i = 0; i < obs.size(); ++i) {
          est.encode(obs[i], alpha2, xi);
          if (done) {
            xn_i.setZero();
          } else {
            est.encode(next[i], alpha2, xn_i);
          }
          replay.push(xi, tests[i], rewards[i], xn_i, done);
          ++st.transitions;
        }
      }

      if (st.steps % cfg.target_update_period == 0) target = est.theta();
      if (st.steps >= cfg.learning_starts && replay.size() >= cfg.batch_size &&
          st.steps % cfg.train_every == 0) {
        replay.sample(cfg.batch_size, rng, x, xn, a, r, d);
        // One tangent pass in the alpha3 direction serves both the TD loss
        // (primal outputs) and the penalty (tangent outputs).
        const bool penalized = cfg.lambda_gp > 0.0;
        nn::Mlp::Cache cache;
        nn::Mat q;
        nn::Mat qdot;
        if (penalized) {
          const nn::Mat xdot = est.alpha3_direction().replicate(1, x.cols());
          q = est.net().forward_tangent(est.theta(), x, xdot, qdot, &cache);
        } else {
          q = est.net().forward(est.theta(), x, &cache);
        }
        const nn::Mat qn_online = est.net().forward(est.theta(), xn);
        const nn::Mat qn_target = est.net().forward(target, xn);
        nn::Mat dy = nn::Mat::Zero(2, cfg.batch_size);
        nn::Mat dydot = nn::Mat::Zero(2, cfg.batch_size);
        double td = 0.0;
        double pen = 0.0;
        double max_q = 0.0;
        const double inv_b = 1.0 / cfg.batch_size;
        for (int j = 0; j < cfg.batch_size; ++j) {
          const auto sj = static_cast<std::size_t>(j);
          const int best = qn_online(1, j) > qn_online(0, j) ? 1 : 0;
          const double boot = d[sj] ? 0.0 : cfg.gamma * qn_target(best, j);
          const double err = q(a[sj], j) - (r[sj] + boot);
          td += err * err * inv_b;
          dy(a[sj], j) = 2.0 * err * inv_b;
          if (penalized) {
            const double h = std::max(0.0, qdot(a[sj], j) - cfg.g_target);
            pen += h * h * inv_b;
            dydot(a[sj], j) = cfg.lambda_gp * 2.0 * h * inv_b;
          }
          max_q = std::max({max_q, std::abs(q(0, j)), std::abs(q(1, j))});
        }
        grad.setZero();
        est.net().backward(est.theta(), cache, dy, penalized ? &dydot : nullptr, grad);
        if (!std::isfinite(td) || !std::isfinite(pen) || !grad.allFinite()) {
          std::ostringstream msg;
          msg << "value training diverged at step " << st.steps << " (update " << st.updates
              << "): td_loss=" << td << " penalty=" << pen << " grad_norm=" << grad.norm();
          throw TrainingDiverged(msg.str());
        }
        nn::clip_grad_norm(grad, cfg.grad_clip);
        const double lr = nn::cosine_lr(st.updates, total_updates, cfg.warmup_updates, cfg.base_lr,
                                        cfg.min_lr);
        adam.step(est.theta(), grad, lr);
        ++st.updates;
        st.last_td_loss = td;
        st.last_penalty = pen;
        st.max_abs_q = max_q;
        if (progress && st.updates % 1000 == 0) progress(st);
      }
    }
  }
  std::ostringstream rs;
  rs << rng;
  return {std::move(est), st, rs.str()};
}

SingleClusterEval evaluate_single_cluster(const QEstimator& est, const ClusterEnvSpec& env,
                                          double alpha2, double alpha3, int episodes,
                                          std::uint64_t seed, SingleClusterRule rule,
                                          int buckets) {
  if (episodes < 1) throw ParameterError("episodes must be >= 1");
  if (buckets < 1) throw ParameterError("buckets must be >= 1");
  const auto model = std::make_shared<const LatentModel>(env.epi);
  SingleClusterEval out;
  out.episodes = episodes;
  const int span = env.size_max - env.size_min + 1;
  for (int b = 0; b < buckets; ++b) {
    out.bucket_upper.push_back(env.size_min + (span * (b + 1) + buckets - 1) / buckets - 1);
  }
  out.bucket_tests_per_step.assign(static_cast<std::size_t>(buckets), 0.0);
  out.bucket_episodes.assign(static_cast<std::size_t>(buckets), 0);
  CostParams costs;
  costs.alpha2 = alpha2;
  costs.alpha3_true = alpha3;
  const int decision_days = env.epi.episode_days - env.epi.decision_start_day;

  for (int k = 0; k < episodes; ++k) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(k), 2);
    Episode ep(model, env, s, alpha2, alpha3);
    std::vector<std::uint8_t> tests;
    std::vector<double> dq;
    while (!ep.cluster.finished()) {
      tests.assign(static_cast<std::size_t>(ep.cluster.size), 0);
      if (ep.deciding(env.epi)) {
        if (rule == SingleClusterRule::kGreedy) {
          const auto obs = ep.observe(env.epi);
          const auto ctx = ep.contexts();
          dq.assign(obs.size(), 0.0);
          est.delta_q_batch(obs, ctx, dq);
          for (std::size_t i = 0; i < obs.size(); ++i) tests[i] = dq[i] > 0.0 ? 1 : 0;
        } else {
          for (int i = 0; i < ep.cluster.size; ++i) {
            tests[static_cast<std::size_t>(i)] =
                uniform_at(s, 0, static_cast<std::uint32_t>(i),
                           static_cast<std::uint32_t>(ep.cluster.current_day), Channel::kPolicy) < 0.5;
          }
        }
      }
      ep.play(tests, env.epi, nullptr);
    }
    const auto& c = ep.cluster;
    const double ret = cluster_reward(static_cast<double>(c.s1_days), static_cast<double>(c.s2_days),
                                      static_cast<double>(c.s3_tests), c.size, costs)
                           .reward;
    out.episode_returns.push_back(ret);
    out.mean_return += ret / episodes;
    const double tps = static_cast<double>(c.s3_tests) / decision_days;
    out.mean_tests_per_step += tps / episodes;
    int b = 0;
    while (b + 1 < buckets && c.size > out.bucket_upper[static_cast<std::size_t>(b)]) ++b;
    out.bucket_tests_per_step[static_cast<std::size_t>(b)] += tps;
    ++out.bucket_episodes[static_cast<std::size_t>(b)];
  }
  for (int b = 0; b < buckets; ++b) {
    const auto sb = static_cast<std::size_t>(b);
    if (out.bucket_episodes[sb] > 0) out.bucket_tests_per_step[sb] /= out.bucket_episodes[sb];
  }
  return out;
}

}  // namespace outbreak
