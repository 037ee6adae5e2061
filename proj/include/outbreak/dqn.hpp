#pragma once

// Training and evaluation of the learned value backend on single-cluster
// environments (no budget: every contact with DeltaQ > 0 is tested).

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "outbreak/epi.hpp"
#include "outbreak/value.hpp"

namespace outbreak {

/// Raised when the training loss stops being finite.
class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

struct TrainConfig {
  std::int64_t total_steps = 200000;  // cluster-days
  int replay_capacity = 200000;
  int batch_size = 512;
  int train_every = 8;
  std::int64_t learning_starts = 2000;
  double base_lr = 5e-4;
  double min_lr = 2e-5;
  std::int64_t warmup_updates = 500;
  double grad_clip = 1.0;
  double eps_start = 1.0;
  double eps_end = 0.1;
  double eps_fraction = 0.3;
  std::int64_t target_update_period = 2000;  // cluster-days
  double gamma = 0.99;
  double lambda_gp = 1.0;
  double g_target = -1.0;
  double alpha3_min = 0.0;
  double alpha3_max = 0.1;
  double alpha2 = 0.1;
  bool joint_alpha2 = false;  // sample alpha2 too and feed it as a 17th input
  double alpha2_min = 0.05;
  double alpha2_max = 0.2;
  int hidden = 64;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& doc);

/// Linear decay from eps_start to eps_end over the first eps_fraction of training.
double epsilon_at(const TrainConfig& c, std::int64_t step);

/// Environment family for training and evaluation.
struct ClusterEnvSpec {
  EpiParams epi;
  int size_min = 2;
  int size_max = 10;
};

struct TrainStats {
  std::int64_t steps = 0;
  std::int64_t updates = 0;
  std::int64_t episodes = 0;
  std::int64_t transitions = 0;
  double last_td_loss = 0.0;
  double last_penalty = 0.0;
  double max_abs_q = 0.0;  // over the final training batch
};

struct TrainResult {
  LearnedEstimator estimator;
  TrainStats stats;
  std::string rng_state;
};

using TrainProgress = std::function<void(const TrainStats&)>;

/// Double-Q TD training with the alpha3 gradient penalty. Deterministic given
/// the config seed. Throws TrainingDiverged on a non-finite loss.
TrainResult td_train(const TrainConfig& config, const ClusterEnvSpec& env,
                     const TrainProgress& progress = {});

enum class SingleClusterRule { kGreedy, kRandom };

struct SingleClusterEval {
  int episodes = 0;
  double mean_return = 0.0;          // per-capita cluster reward, alpha3_true = evaluated alpha3
  double mean_tests_per_step = 0.0;  // over decision days
  std::vector<int> bucket_upper;     // inclusive upper size of each bucket
  std::vector<double> bucket_tests_per_step;
  std::vector<int> bucket_episodes;
  std::vector<double> episode_returns;
};

/// Common random numbers: episode k uses derive_seed(seed, k) for every
/// estimator and rule.
SingleClusterEval evaluate_single_cluster(const QEstimator& est, const ClusterEnvSpec& env,
                                          double alpha2, double alpha3, int episodes,
                                          std::uint64_t seed,
                                          SingleClusterRule rule = SingleClusterRule::kGreedy,
                                          int buckets = 3);

}  // namespace outbreak
