#include "outbreak/nn.hpp"

#include <cmath>
#include <numbers>

#include "outbreak/errors.hpp"

namespace outbreak::nn {

Mlp::Mlp(std::vector<int> sizes, bool tanh_output)
    : sizes_(std::move(sizes)), tanh_output_(tanh_output) {
  if (sizes_.size() < 2) throw ParameterError("an MLP needs at least input and output sizes");
  int off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw ParameterError("layer sizes must be >= 1");
    offsets_.push_back(off);
    off += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
  num_params_ = off;
}

void Mlp::init(Eigen::Ref<Vec> theta, std::mt19937_64& rng) const {
  if (theta.size() != num_params_) throw ParameterError("parameter vector has the wrong size");
  theta.setZero();
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double a = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-a, a);
    for (int k = 0; k < in * out; ++k) theta[offsets_[l] + k] = u(rng);
  }
}

Mat Mlp::forward(const Eigen::Ref<const Vec>& theta, const Mat& X, Cache* cache) const {
  if (cache != nullptr) {
    cache->h.clear();
    cache->hdot.clear();
    cache->h.push_back(X);
  }
  Mat h = X;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<const Mat> W(theta.data() + offsets_[l], out, in);
    Eigen::Map<const Vec> b(theta.data() + offsets_[l] + out * in, out);
    Mat z = W * h;
    z.colwise() += b;
    h = activated(l) ? Mat(z.array().tanh()) : z;
    if (cache != nullptr) cache->h.push_back(h);
  }
  return h;
}

Mat Mlp::forward_tangent(const Eigen::Ref<const Vec>& theta, const Mat& X, const Mat& Xdot,
                         Mat& Ydot, Cache* cache) const {
  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  c.h.assign(1, X);
  c.hdot.assign(1, Xdot);
  Mat h = X;
  Mat hd = Xdot;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<const Mat> W(theta.data() + offsets_[l], out, in);
    Eigen::Map<const Vec> b(theta.data() + offsets_[l] + out * in, out);
    Mat z = W * h;
    z.colwise() += b;
    Mat zd = W * hd;
    if (activated(l)) {
      h = z.array().tanh();
      hd = (1.0 - h.array().square()) * zd.array();
    } else {
      h = std::move(z);
      hd = std::move(zd);
    }
    c.h.push_back(h);
    c.hdot.push_back(hd);
  }
  Ydot = hd;
  return h;
}

void Mlp::backward(const Eigen::Ref<const Vec>& theta, const Cache& cache, const Mat& dY,
                   const Mat* dYdot, Eigen::Ref<Vec> grad, Mat* dX) const {
  const bool tangent = dYdot != nullptr && !cache.hdot.empty();
  Mat gh = dY;  // adjoint of layer output
  Mat ghd;      // adjoint of layer output tangent
  if (tangent) ghd = *dYdot;
  for (std::size_t l = sizes_.size() - 1; l-- > 0;) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<const Mat> W(theta.data() + offsets_[l], out, in);
    Eigen::Map<Mat> gW(grad.data() + offsets_[l], out, in);
    Eigen::Map<Vec> gb(grad.data() + offsets_[l] + out * in, out);
    const Mat& h = cache.h[l + 1];
    Mat gz;
    Mat gzd;
    if (activated(l)) {
      const Eigen::ArrayXXd dh = 1.0 - h.array().square();
      gz = gh.array() * dh;
      if (tangent) {
        // hdot = (1 - h^2) zdot with zdot = W hdot_prev.
        const Mat zd = W * cache.hdot[l];
        gz.array() += ghd.array() * (-2.0 * h.array() * dh * zd.array());
        gzd = ghd.array() * dh;
      }
    } else {
      gz = gh;
      if (tangent) gzd = ghd;
    }
    gW.noalias() += gz * cache.h[l].transpose();
    gb += gz.rowwise().sum();
    if (tangent) gW.noalias() += gzd * cache.hdot[l].transpose();
    if (l > 0 || dX != nullptr) {
      gh = W.transpose() * gz;
      if (tangent) ghd = W.transpose() * gzd;
    }
  }
  if (dX != nullptr) *dX = gh;
}

void Adam::reset(int n) {
  m = Vec::Zero(n);
  v = Vec::Zero(n);
  t = 0;
}

void Adam::step(Eigen::Ref<Vec> theta, const Vec& grad, double lr) {
  if (m.size() != theta.size()) reset(static_cast<int>(theta.size()));
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  if (weight_decay > 0.0) theta *= (1.0 - lr * weight_decay);
  theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

double clip_grad_norm(Vec& grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps,
                 double base_lr, double min_lr) {
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const double span = static_cast<double>(std::max<std::int64_t>(1, total_steps - warmup_steps));
  const double frac = std::min(1.0, static_cast<double>(step - warmup_steps) / span);
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace outbreak::nn
