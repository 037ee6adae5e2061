#pragma once

// Global multiplier controllers: fixed m, binary search on the proposed
// demand, and the learned PPO policy over the global observation.

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "outbreak/nn.hpp"
#include "outbreak/observation.hpp"

namespace outbreak {

struct MultiplierRange {
  double m_min = 0.25;
  double m_max = 4.0;
  void validate() const;
};

/// Checks m against the range and returns it. Throws ParameterError when
/// outside [m_min, m_max].
double fixed_m(double m, const MultiplierRange& range);

struct SearchResult {
  double m = 1.0;
  int evaluations = 0;
};

/// Smallest multiplier whose proposed demand fits the budget, assuming
/// demand(m) is non-increasing. Returns 1 after one evaluation when
/// demand(1) <= B; otherwise bisects (1, m_max] and returns the feasible end,
/// using at most tol_iters evaluations in total. B = 0 returns m_max without
/// evaluating.
SearchResult bin_search_m(const std::function<int(double)>& demand, int budget,
                          const MultiplierRange& range, int tol_iters = 30);

// ---------------------------------------------------------------------------
// PPO controller

struct PpoNetSpec {
  int encoder_hidden = 32;
  int trunk_hidden = 64;
  double init_log_std = -0.5;
  MultiplierRange range;
};

struct PolicyOutput {
  double mean_u = 0.0;
  double value = 0.0;
  double log_std = 0.0;
};

/// Permutation-invariant policy/value network: a shared encoder over active
/// cluster blocks, mean-pooled, concatenated with the global features and fed
/// to a trunk producing (mean of u, state value). log_std is a free parameter.
class PpoPolicy {
 public:
  explicit PpoPolicy(const PpoNetSpec& spec = {});

  const PpoNetSpec& spec() const { return spec_; }
  int num_params() const { return static_cast<int>(theta_.size()); }
  nn::Vec& theta() { return theta_; }
  const nn::Vec& theta() const { return theta_; }
  void init(std::mt19937_64& rng);

  /// One forward pass.
  PolicyOutput evaluate(const GlobalObs& obs) const;
  double multiplier(double u) const;
  /// Evaluation-time multiplier (mean action). Increments evaluation_count.
  double decide(const GlobalObs& obs) const;

  struct Batch {
    std::vector<const GlobalObs*> obs;
    std::vector<double> actions;       // sampled u
    std::vector<double> old_log_probs;
    std::vector<double> advantages;
    std::vector<double> returns;
  };
  struct LossStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
  };
  /// PPO loss gradient on a minibatch, written into grad (resized).
  LossStats loss_and_grad(const Batch& batch, double clip, double value_coef, double entropy_coef,
                          nn::Vec& grad) const;

  mutable long evaluation_count = 0;

 private:
  PpoNetSpec spec_;
  nn::Mlp encoder_;
  nn::Mlp trunk_;
  int trunk_offset_ = 0;
  int log_std_index_ = 0;
  nn::Vec theta_;
};

/// -mean(min(r A, clip(r, 1-eps, 1+eps) A)).
double clipped_surrogate_loss(std::span<const double> ratios, std::span<const double> advantages,
                              double clip);

double gaussian_log_prob(double x, double mean, double log_std);

/// Generalized advantage estimation over one rollout. dones[t] marks that
/// step t ended an episode (no bootstrapping past it).
void compute_gae(std::span<const double> rewards, std::span<const double> values,
                 std::span<const std::uint8_t> dones, double last_value, double gamma,
                 double lambda, std::vector<double>& advantages, std::vector<double>& returns);

/// Streaming mean/variance (Welford, with parallel merge).
struct RunningMoments {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;
  void update(std::span<const double> xs);
  double variance() const { return count > 1.0 ? m2 / count : 1.0; }
};

}  // namespace outbreak
