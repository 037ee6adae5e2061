#include "outbreak/value.hpp"

#include <algorithm>
#include <cmath>

#include "outbreak/errors.hpp"

namespace outbreak {

double QEstimator::delta_q(const LocalObs& obs, const BeliefContext* ctx) const {
  const auto q = q_values(obs, ctx);
  return q[1] - q[0];
}

void QEstimator::delta_q_batch(std::span<const LocalObs> obs, std::span<const BeliefContext> ctx,
                               std::span<double> out) const {
  if (out.size() != obs.size()) throw ParameterError("delta_q_batch output size mismatch");
  for (std::size_t i = 0; i < obs.size(); ++i) {
    out[i] = delta_q(obs[i], ctx.empty() ? nullptr : &ctx[i]);
  }
}

double hinge_penalty(double partial, double g_target) {
  const double h = std::max(0.0, partial - g_target);
  return h * h;
}

// ---------------------------------------------------------------------------

AnalyticEstimator::AnalyticEstimator(std::shared_ptr<const LatentModel> model, double alpha2,
                                     int lookahead_days)
    : model_(std::move(model)), alpha2_(alpha2), lookahead_(lookahead_days) {
  if (!model_) throw ParameterError("analytic estimator needs a latent model");
  if (!(alpha2 >= 0.0)) throw ParameterError("alpha2 must be >= 0");
  if (lookahead_days < 1) throw ParameterError("lookahead_days must be >= 1");
}

double AnalyticEstimator::voi_posterior(std::span<const double> w, int day) const {
  const auto& epi = model_->epi();
  const int S = model_->num_states();
  if (static_cast<int>(w.size()) != S) throw ParameterError("belief weights have the wrong size");
  const int first = day + epi.result_delay_days;
  const int last = std::min(first + lookahead_ - 1, epi.episode_days - 1);
  const double a2 = alpha2_;
  const double w0 = w[0];
  const double w0_pos = w0 * model_->result_likelihood(0, day, true);
  double voi = 0.0;
  for (int d = first; d <= last; ++d) {
    double inf = 0.0;
    double inf_pos = 0.0;
    for (int z = 1; z < S; ++z) {
      if (!model_->infectious(z, d)) continue;
      const double wz = w[static_cast<std::size_t>(z)];
      inf += wz;
      inf_pos += wz * model_->result_likelihood(z, day, true);
    }
    const double before = std::min(a2 * w0, inf);
    const double pos = std::min(a2 * w0_pos, inf_pos);
    const double neg = std::min(a2 * (w0 - w0_pos), inf - inf_pos);
    voi += std::max(0.0, before - pos - neg);
  }
  return voi;
}

double AnalyticEstimator::voi_fallback(const LocalObs& obs) const {
  // Two-state approximation: infectious over the whole lookahead with
  // probability p, uninfected otherwise.
  const auto& epi = model_->epi();
  const double p = std::clamp(std::max({obs[3], obs[4], obs[5]}), 0.0, 1.0);
  const double a2 = alpha2_;
  const double fp = 1.0 - epi.test_specificity;
  const double before = std::min(a2 * (1.0 - p), p);
  const double pos = std::min(a2 * (1.0 - p) * fp, p * epi.test_sensitivity);
  const double neg = std::min(a2 * (1.0 - p) * (1.0 - fp), p * (1.0 - epi.test_sensitivity));
  return lookahead_ * std::max(0.0, before - pos - neg);
}

double AnalyticEstimator::information_value(const LocalObs& obs, const BeliefContext* ctx) const {
  if (ctx != nullptr && !ctx->weights.empty()) return voi_posterior(ctx->weights, ctx->day);
  return voi_fallback(obs);
}

double AnalyticEstimator::delta_q(const LocalObs& obs, const BeliefContext* ctx) const {
  return information_value(obs, ctx) - obs[kAlpha3Slot];
}

std::array<double, 2> AnalyticEstimator::q_values(const LocalObs& obs,
                                                  const BeliefContext* ctx) const {
  // Q_no-test is minus the lookahead cost under the threshold rule without
  // new information; Q_test adds the information value and pays the cost.
  double base = 0.0;
  if (ctx != nullptr && !ctx->weights.empty()) {
    const auto& epi = model_->epi();
    const int first = ctx->day + epi.result_delay_days;
    const int last = std::min(first + lookahead_ - 1, epi.episode_days - 1);
    for (int d = first; d <= last; ++d) {
      double inf = 0.0;
      for (int z = 1; z < model_->num_states(); ++z) {
        if (model_->infectious(z, d)) inf += ctx->weights[static_cast<std::size_t>(z)];
      }
      base += std::min(alpha2_ * ctx->weights[0], inf);
    }
  } else {
    const double p = std::clamp(std::max({obs[3], obs[4], obs[5]}), 0.0, 1.0);
    base = lookahead_ * std::min(alpha2_ * (1.0 - p), p);
  }
  return {-base, -base + delta_q(obs, ctx)};
}

// ---------------------------------------------------------------------------

LearnedEstimator::LearnedEstimator(const LearnedSpec& spec)
    : spec_(spec),
      net_({spec.include_alpha2 ? kLocalObsDim + 1 : kLocalObsDim, spec.hidden, spec.hidden, 2}),
      theta_(nn::Vec::Zero(net_.num_params())) {
  if (spec.hidden < 1) throw ParameterError("hidden width must be >= 1");
}

void LearnedEstimator::encode(const LocalObs& obs, double alpha2, Eigen::Ref<nn::Vec> x) const {
  for (int i = 0; i < kLocalObsDim; ++i) x[i] = obs[i];
  x[kAlpha3Slot] *= spec_.alpha3_input_scale;
  if (spec_.include_alpha2) {
    x[kAlpha2Slot] = (alpha2 >= 0.0 ? alpha2 : spec_.alpha2) * spec_.alpha2_input_scale;
  }
}

nn::Mat LearnedEstimator::encode_batch(std::span<const LocalObs> obs,
                                       std::span<const double> alpha2s) const {
  nn::Mat x(input_dim(), static_cast<Eigen::Index>(obs.size()));
  for (std::size_t j = 0; j < obs.size(); ++j) {
    encode(obs[j], alpha2s.empty() ? -1.0 : alpha2s[j], x.col(static_cast<Eigen::Index>(j)));
  }
  return x;
}

nn::Vec LearnedEstimator::alpha3_direction() const {
  nn::Vec d = nn::Vec::Zero(input_dim());
  d[kAlpha3Slot] = spec_.alpha3_input_scale;
  return d;
}

std::array<double, 2> LearnedEstimator::q_values(const LocalObs& obs, const BeliefContext*) const {
  nn::Mat x(input_dim(), 1);
  encode(obs, -1.0, x.col(0));
  const nn::Mat y = net_.forward(theta_, x);
  return {y(0, 0), y(1, 0)};
}

void LearnedEstimator::delta_q_batch(std::span<const LocalObs> obs, std::span<const BeliefContext>,
                                     std::span<double> out) const {
  if (out.size() != obs.size()) throw ParameterError("delta_q_batch output size mismatch");
  if (obs.empty()) return;
  const nn::Mat y = net_.forward(theta_, encode_batch(obs));
  for (std::size_t j = 0; j < obs.size(); ++j) {
    out[j] = y(1, static_cast<Eigen::Index>(j)) - y(0, static_cast<Eigen::Index>(j));
  }
}

std::vector<double> LearnedEstimator::alpha3_partials(std::span<const LocalObs> obs,
                                                      std::span<const int> actions,
                                                      const nn::Vec* theta) const {
  if (actions.size() != obs.size()) throw ParameterError("one action per observation required");
  const nn::Mat x = encode_batch(obs);
  const nn::Mat xdot = alpha3_direction().replicate(1, x.cols());
  nn::Mat ydot;
  net_.forward_tangent(theta != nullptr ? *theta : theta_, x, xdot, ydot, nullptr);
  std::vector<double> out(obs.size());
  for (std::size_t j = 0; j < obs.size(); ++j) {
    out[j] = ydot(actions[j], static_cast<Eigen::Index>(j));
  }
  return out;
}

std::vector<double> LearnedEstimator::alpha3_partials_fd(std::span<const LocalObs> obs,
                                                         std::span<const int> actions,
                                                         double h) const {
  if (actions.size() != obs.size()) throw ParameterError("one action per observation required");
  std::vector<double> out(obs.size());
  for (std::size_t j = 0; j < obs.size(); ++j) {
    LocalObs up = obs[j];
    LocalObs down = obs[j];
    up[kAlpha3Slot] += h;
    down[kAlpha3Slot] -= h;
    const auto a = static_cast<std::size_t>(actions[j]);
    out[j] = (q_values(up, nullptr)[a] - q_values(down, nullptr)[a]) / (2.0 * h);
  }
  return out;
}

double grad_penalty(const LearnedEstimator& est, std::span<const LocalObs> obs,
                    std::span<const int> actions, double g_target) {
  if (obs.empty()) return 0.0;
  const auto partials = est.alpha3_partials(obs, actions);
  double acc = 0.0;
  for (double p : partials) acc += hinge_penalty(p, g_target);
  return acc / static_cast<double>(obs.size());
}

double grad_penalty_fd(const LearnedEstimator& est, std::span<const LocalObs> obs,
                       std::span<const int> actions, double g_target, double h) {
  if (obs.empty()) return 0.0;
  const auto partials = est.alpha3_partials_fd(obs, actions, h);
  double acc = 0.0;
  for (double p : partials) acc += hinge_penalty(p, g_target);
  return acc / static_cast<double>(obs.size());
}

double accumulate_grad_penalty(const LearnedEstimator& est, const nn::Mat& x,
                               std::span<const int> actions, double g_target, double lambda,
                               Eigen::Ref<nn::Vec> grad) {
  const auto n = x.cols();
  if (n == 0) return 0.0;
  const nn::Mat xdot = est.alpha3_direction().replicate(1, n);
  nn::Mat ydot;
  nn::Mlp::Cache cache;
  const nn::Mat y = est.net().forward_tangent(est.theta(), x, xdot, ydot, &cache);
  nn::Mat dy = nn::Mat::Zero(y.rows(), n);
  nn::Mat dydot = nn::Mat::Zero(y.rows(), n);
  double penalty = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const int a = actions[static_cast<std::size_t>(j)];
    const double h = std::max(0.0, ydot(a, j) - g_target);
    penalty += h * h;
    dydot(a, j) = lambda * 2.0 * h / static_cast<double>(n);
  }
  if (lambda != 0.0) est.net().backward(est.theta(), cache, dy, &dydot, grad);
  return penalty / static_cast<double>(n);
}

}  // namespace outbreak
