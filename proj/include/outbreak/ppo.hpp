#pragma once

// PPO training of the global multiplier controller on the multi-cluster
// system, with the local value estimator held fixed.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "json.hpp"
#include "outbreak/checkpoint.hpp"
#include "outbreak/controllers.hpp"
#include "outbreak/sim.hpp"
#include "outbreak/value.hpp"

namespace outbreak {

struct PpoConfig {
  int n_parallel_envs = 4;
  int rollout_len = 256;
  int epochs = 4;
  int minibatch = 256;
  double gamma = 0.99;
  double gae_lambda = 0.90;
  double learning_rate = 3e-4;
  double weight_decay = 1e-4;
  double clip = 0.10;
  double value_coef = 0.5;
  double entropy_coef = 0.001;
  double kl_stop = 0.15;
  double grad_clip = 0.5;
  double m_min = 0.25;
  double m_max = 4.0;
  std::int64_t total_steps = 20480;  // system days over all environments
  /// Per-episode budget drawn uniformly from
  /// [budget_min_per_cluster, budget_max_per_cluster] x n_clusters.
  double budget_min_per_cluster = 0.5;
  double budget_max_per_cluster = 4.0;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const PpoConfig& c);
PpoConfig ppo_config_from_json(const nlohmann::json& doc);

struct PpoStats {
  std::int64_t steps = 0;
  int iterations = 0;
  std::int64_t episodes = 0;
  double mean_episode_return = 0.0;  // over episodes finished in the last iteration
  double last_policy_loss = 0.0;
  double last_value_loss = 0.0;
  double last_kl = 0.0;
  int early_stops = 0;
};

struct PpoResult {
  std::shared_ptr<PpoPolicy> policy;
  PpoStats stats;
  std::string rng_state;
};

using PpoProgress = std::function<void(const PpoStats&)>;

/// Throws TrainingDiverged on a non-finite loss.
PpoResult ppo_train(const PpoConfig& config, const SystemConfig& env,
                    std::shared_ptr<const QEstimator> estimator, const PpoProgress& progress = {});

Checkpoint make_checkpoint(const PpoPolicy& policy, const nlohmann::json& train_config = {},
                           const std::string& rng_state = {});
/// Throws InputError for other backends or mismatched parameter counts.
std::shared_ptr<PpoPolicy> ppo_from_checkpoint(const Checkpoint& ckpt);

}  // namespace outbreak
