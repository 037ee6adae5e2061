#pragma once

// Marginal value of testing one contact, DeltaQ = Q(test) - Q(no-test).
//
// Two backends share the QEstimator interface: an analytic scorer working on
// the Bayesian posterior (value of information of one test under the
// threshold quarantine rule, minus the active test cost) and a learned
// action-value network conditioned on the cost slot of the observation.

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "outbreak/belief.hpp"
#include "outbreak/nn.hpp"
#include "outbreak/observation.hpp"

namespace outbreak {

/// Posterior over latent states of the contact behind an observation. The
/// analytic backend needs it; learned backends ignore it.
struct BeliefContext {
  std::span<const double> weights;
  int day = 0;
};

class QEstimator {
 public:
  virtual ~QEstimator() = default;

  virtual std::string backend() const = 0;
  /// Cost of an unnecessary quarantine day the estimator was built for.
  virtual double alpha2() const = 0;
  /// (Q_no-test, Q_test).
  virtual std::array<double, 2> q_values(const LocalObs& obs, const BeliefContext* ctx) const = 0;
  virtual double delta_q(const LocalObs& obs, const BeliefContext* ctx) const;
  /// Batched delta_q; ctx may be empty or sized like obs.
  virtual void delta_q_batch(std::span<const LocalObs> obs, std::span<const BeliefContext> ctx,
                             std::span<double> out) const;
};

/// Squared hinge (max(0, partial - g_target))^2.
double hinge_penalty(double partial, double g_target);

// ---------------------------------------------------------------------------

class AnalyticEstimator final : public QEstimator {
 public:
  AnalyticEstimator(std::shared_ptr<const LatentModel> model, double alpha2, int lookahead_days = 7);

  std::string backend() const override { return "analytic"; }
  double alpha2() const override { return alpha2_; }
  std::array<double, 2> q_values(const LocalObs& obs, const BeliefContext* ctx) const override;
  /// VOI - obs[alpha3 slot], computed without going through q_values so
  /// that the cost enters exactly linearly.
  double delta_q(const LocalObs& obs, const BeliefContext* ctx) const override;

  /// Expected reduction of the lookahead S1/S2 cost from testing today and
  /// acting on the result. Non-negative.
  double information_value(const LocalObs& obs, const BeliefContext* ctx) const;
  const LatentModel& model() const { return *model_; }

 private:
  std::shared_ptr<const LatentModel> model_;
  double alpha2_;
  int lookahead_;

  double voi_posterior(std::span<const double> w, int day) const;
  double voi_fallback(const LocalObs& obs) const;
};

// ---------------------------------------------------------------------------

struct LearnedSpec {
  bool include_alpha2 = false;  // 17-dim joint (alpha2, alpha3) variant
  int hidden = 64;
  double alpha2 = 0.1;          // fixed alpha2 when include_alpha2 is false
  double alpha3_input_scale = 10.0;
  double alpha2_input_scale = 10.0;
  double alpha3_min = 0.0;      // training range, recorded for diagnostics
  double alpha3_max = 0.1;
};

class LearnedEstimator final : public QEstimator {
 public:
  explicit LearnedEstimator(const LearnedSpec& spec);

  std::string backend() const override { return "learned"; }
  double alpha2() const override { return spec_.alpha2; }
  std::array<double, 2> q_values(const LocalObs& obs, const BeliefContext* ctx) const override;
  void delta_q_batch(std::span<const LocalObs> obs, std::span<const BeliefContext> ctx,
                     std::span<double> out) const override;

  const LearnedSpec& spec() const { return spec_; }
  const nn::Mlp& net() const { return net_; }
  nn::Vec& theta() { return theta_; }
  const nn::Vec& theta() const { return theta_; }
  int input_dim() const { return net_.in_dim(); }

  /// Network input for one observation (scaled; alpha2 appended in the joint
  /// variant, taken from `alpha2` when >= 0, else from LearnedSpec).
  void encode(const LocalObs& obs, double alpha2, Eigen::Ref<nn::Vec> x) const;
  nn::Mat encode_batch(std::span<const LocalObs> obs, std::span<const double> alpha2s = {}) const;
  /// Raw-units input direction of d/d(alpha3).
  nn::Vec alpha3_direction() const;

  /// Exact dQ(o, a)/d(alpha3) for each sample.
  std::vector<double> alpha3_partials(std::span<const LocalObs> obs, std::span<const int> actions,
                                      const nn::Vec* theta = nullptr) const;
  /// Central finite differences with step h in raw alpha3 units.
  std::vector<double> alpha3_partials_fd(std::span<const LocalObs> obs,
                                         std::span<const int> actions, double h = 1e-4) const;

 private:
  LearnedSpec spec_;
  nn::Mlp net_;
  nn::Vec theta_;
};

/// Mean squared hinge of dQ(o, a)/d(alpha3) over the batch.
double grad_penalty(const LearnedEstimator& est, std::span<const LocalObs> obs,
                    std::span<const int> actions, double g_target);
double grad_penalty_fd(const LearnedEstimator& est, std::span<const LocalObs> obs,
                       std::span<const int> actions, double g_target, double h = 1e-4);

/// Adds lambda * d(penalty)/d(theta) to grad and returns the penalty.
double accumulate_grad_penalty(const LearnedEstimator& est, const nn::Mat& x,
                               std::span<const int> actions, double g_target, double lambda,
                               Eigen::Ref<nn::Vec> grad);

}  // namespace outbreak
