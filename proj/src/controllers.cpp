#include "outbreak/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "outbreak/errors.hpp"

namespace outbreak {

void MultiplierRange::validate() const {
  if (!(m_min >= 0.0)) throw ParameterError("m_min must be >= 0");
  if (!(m_min < m_max)) throw ParameterError("m_min must be < m_max");
}

double fixed_m(double m, const MultiplierRange& range) {
  range.validate();
  if (!(m >= range.m_min && m <= range.m_max)) {
    throw ParameterError("fixed multiplier " + std::to_string(m) + " outside [" +
                         std::to_string(range.m_min) + ", " + std::to_string(range.m_max) + "]");
  }
  return m;
}

SearchResult bin_search_m(const std::function<int(double)>& demand, int budget,
                          const MultiplierRange& range, int tol_iters) {
  range.validate();
  if (tol_iters < 1) throw ParameterError("tol_iters must be >= 1");
  SearchResult r;
  if (budget <= 0) {
    r.m = range.m_max;
    return r;
  }
  const double start = std::clamp(1.0, range.m_min, range.m_max);
  ++r.evaluations;
  if (demand(start) <= budget) {
    r.m = start;
    return r;
  }
  double lo = start;
  double hi = range.m_max;
  while (r.evaluations < tol_iters) {
    const double mid = 0.5 * (lo + hi);
    ++r.evaluations;
    if (demand(mid) <= budget) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  r.m = hi;
  return r;
}

// ---------------------------------------------------------------------------

PpoPolicy::PpoPolicy(const PpoNetSpec& spec)
    : spec_(spec),
      encoder_({kClusterDim, spec.encoder_hidden, spec.encoder_hidden}, true),
      trunk_({kGlobalDim + spec.encoder_hidden, spec.trunk_hidden, spec.trunk_hidden, 2}) {
  spec_.range.validate();
  trunk_offset_ = encoder_.num_params();
  log_std_index_ = trunk_offset_ + trunk_.num_params();
  theta_ = nn::Vec::Zero(log_std_index_ + 1);
  theta_[log_std_index_] = spec_.init_log_std;
}

void PpoPolicy::init(std::mt19937_64& rng) {
  encoder_.init(theta_.segment(0, encoder_.num_params()), rng);
  trunk_.init(theta_.segment(trunk_offset_, trunk_.num_params()), rng);
  // Small output layer so the initial policy sits near the middle of the range.
  const int last = trunk_.num_params() - (2 * spec_.trunk_hidden + 2);
  theta_.segment(trunk_offset_ + last, 2 * spec_.trunk_hidden) *= 0.01;
  theta_[log_std_index_] = spec_.init_log_std;
}

namespace {

struct Packed {
  nn::Mat blocks;            // kClusterDim x K
  std::vector<int> owner;    // sample of each block
  std::vector<int> count;    // active blocks per sample
  nn::Mat globals;           // kGlobalDim x M
};

Packed pack(std::span<const GlobalObs* const> obs) {
  Packed p;
  const auto m = static_cast<Eigen::Index>(obs.size());
  p.globals.resize(kGlobalDim, m);
  p.count.assign(obs.size(), 0);
  int total = 0;
  for (const auto* o : obs) total += o->active_blocks();
  p.blocks.resize(kClusterDim, total);
  p.owner.reserve(static_cast<std::size_t>(total));
  Eigen::Index k = 0;
  for (std::size_t s = 0; s < obs.size(); ++s) {
    const auto& o = *obs[s];
    for (int j = 0; j < kGlobalDim; ++j) p.globals(j, static_cast<Eigen::Index>(s)) = o.values[static_cast<std::size_t>(j)];
    for (int b = 0; b < o.n_max; ++b) {
      if (o.block_cluster[static_cast<std::size_t>(b)] < 0) continue;
      const auto blk = o.block(b);
      for (int j = 0; j < kClusterDim; ++j) p.blocks(j, k) = blk[static_cast<std::size_t>(j)];
      p.owner.push_back(static_cast<int>(s));
      ++p.count[s];
      ++k;
    }
  }
  return p;
}

}  // namespace

PolicyOutput PpoPolicy::evaluate(const GlobalObs& obs) const {
  const GlobalObs* one[] = {&obs};
  const Packed p = pack(one);
  const auto enc = theta_.segment(0, encoder_.num_params());
  const auto trk = theta_.segment(trunk_offset_, trunk_.num_params());
  nn::Mat x(kGlobalDim + spec_.encoder_hidden, 1);
  x.topRows(kGlobalDim) = p.globals;
  x.bottomRows(spec_.encoder_hidden).setZero();
  if (p.blocks.cols() > 0) {
    const nn::Mat h = encoder_.forward(enc, p.blocks);
    x.bottomRows(spec_.encoder_hidden) = h.rowwise().mean();
  }
  const nn::Mat y = trunk_.forward(trk, x);
  return {y(0, 0), y(1, 0), theta_[log_std_index_]};
}

double PpoPolicy::multiplier(double u) const {
  const double s = 1.0 / (1.0 + std::exp(-u));
  return spec_.range.m_min + s * (spec_.range.m_max - spec_.range.m_min);
}

double PpoPolicy::decide(const GlobalObs& obs) const {
  ++evaluation_count;
  return multiplier(evaluate(obs).mean_u);
}

PpoPolicy::LossStats PpoPolicy::loss_and_grad(const Batch& batch, double clip, double value_coef,
                                              double entropy_coef, nn::Vec& grad) const {
  const std::size_t m = batch.obs.size();
  grad = nn::Vec::Zero(theta_.size());
  LossStats st;
  if (m == 0) return st;
  const Packed p = pack(batch.obs);
  const auto enc = theta_.segment(0, encoder_.num_params());
  const auto trk = theta_.segment(trunk_offset_, trunk_.num_params());
  const int eh = spec_.encoder_hidden;

  nn::Mlp::Cache enc_cache;
  nn::Mat h(eh, 0);
  if (p.blocks.cols() > 0) h = encoder_.forward(enc, p.blocks, &enc_cache);
  nn::Mat x = nn::Mat::Zero(kGlobalDim + eh, static_cast<Eigen::Index>(m));
  x.topRows(kGlobalDim) = p.globals;
  for (Eigen::Index k = 0; k < h.cols(); ++k) {
    const auto s = static_cast<std::size_t>(p.owner[static_cast<std::size_t>(k)]);
    x.col(static_cast<Eigen::Index>(s)).tail(eh) += h.col(k) / p.count[s];
  }
  nn::Mlp::Cache trunk_cache;
  const nn::Mat y = trunk_.forward(trk, x, &trunk_cache);

  const double log_std = theta_[log_std_index_];
  const double var = std::exp(2.0 * log_std);
  const double inv_m = 1.0 / static_cast<double>(m);
  nn::Mat dy = nn::Mat::Zero(2, static_cast<Eigen::Index>(m));
  double g_log_std = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    const double mu = y(0, c);
    const double v = y(1, c);
    const double u = batch.actions[i];
    const double a = batch.advantages[i];
    const double logp = gaussian_log_prob(u, mu, log_std);
    const double ratio = std::exp(logp - batch.old_log_probs[i]);
    const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    const double unclipped_term = ratio * a;
    const double clipped_term = clipped * a;
    st.policy_loss -= std::min(unclipped_term, clipped_term) * inv_m;
    st.approx_kl += ((ratio - 1.0) - (logp - batch.old_log_probs[i])) * inv_m;
    if (std::abs(ratio - 1.0) > clip) st.clip_fraction += inv_m;
    // d(-min)/d(logp) is -A r when the unclipped branch is active.
    if (unclipped_term <= clipped_term) {
      const double g_logp = -a * ratio * inv_m;
      dy(0, c) += g_logp * (u - mu) / var;
      g_log_std += g_logp * ((u - mu) * (u - mu) / var - 1.0);
    }
    const double err = v - batch.returns[i];
    st.value_loss += 0.5 * err * err * inv_m;
    dy(1, c) += value_coef * err * inv_m;
  }
  st.entropy = log_std + 0.5 * (1.0 + std::log(2.0 * std::numbers::pi));
  g_log_std -= entropy_coef;

  nn::Mat dx;
  trunk_.backward(trk, trunk_cache, dy, nullptr, grad.segment(trunk_offset_, trunk_.num_params()),
                  &dx);
  if (h.cols() > 0) {
    nn::Mat dh(eh, h.cols());
    for (Eigen::Index k = 0; k < h.cols(); ++k) {
      const auto s = static_cast<std::size_t>(p.owner[static_cast<std::size_t>(k)]);
      dh.col(k) = dx.col(static_cast<Eigen::Index>(s)).tail(eh) / p.count[s];
    }
    encoder_.backward(enc, enc_cache, dh, nullptr, grad.segment(0, encoder_.num_params()));
  }
  grad[log_std_index_] = g_log_std;
  return st;
}

double clipped_surrogate_loss(std::span<const double> ratios, std::span<const double> advantages,
                              double clip) {
  if (ratios.size() != advantages.size()) throw ParameterError("ratio/advantage size mismatch");
  if (ratios.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double c = std::clamp(ratios[i], 1.0 - clip, 1.0 + clip);
    acc += std::min(ratios[i] * advantages[i], c * advantages[i]);
  }
  return -acc / static_cast<double>(ratios.size());
}

double gaussian_log_prob(double x, double mean, double log_std) {
  const double z = (x - mean) * std::exp(-log_std);
  return -0.5 * z * z - log_std - 0.5 * std::log(2.0 * std::numbers::pi);
}

void compute_gae(std::span<const double> rewards, std::span<const double> values,
                 std::span<const std::uint8_t> dones, double last_value, double gamma,
                 double lambda, std::vector<double>& advantages, std::vector<double>& returns) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ParameterError("GAE input size mismatch");
  advantages.assign(n, 0.0);
  returns.assign(n, 0.0);
  double gae = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next_value = t + 1 < n ? values[t + 1] : last_value;
    const double nonterminal = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * nonterminal - values[t];
    gae = delta + gamma * lambda * nonterminal * gae;
    advantages[t] = gae;
    returns[t] = gae + values[t];
  }
}

void RunningMoments::update(std::span<const double> xs) {
  if (xs.empty()) return;
  double bm = 0.0;
  for (double x : xs) bm += x;
  const double bn = static_cast<double>(xs.size());
  bm /= bn;
  double bm2 = 0.0;
  for (double x : xs) bm2 += (x - bm) * (x - bm);
  const double total = count + bn;
  const double delta = bm - mean;
  mean += delta * bn / total;
  m2 += bm2 + delta * delta * count * bn / total;
  count = total;
}

}  // namespace outbreak
