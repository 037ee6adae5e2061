#pragma once

// Small dense networks on a flat parameter vector, with the first-order
// tangent pass needed to differentiate an input partial with respect to
// the parameters.

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace outbreak::nn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Fully connected network with tanh hidden layers. Parameters are packed per
/// layer as W (out x in, column-major) followed by b.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> sizes, bool tanh_output = false);

  int num_params() const { return num_params_; }
  int in_dim() const { return sizes_.front(); }
  int out_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  bool tanh_output() const { return tanh_output_; }

  /// Uniform Glorot initialization, zero biases.
  void init(Eigen::Ref<Vec> theta, std::mt19937_64& rng) const;

  struct Cache {
    std::vector<Mat> h;     // h[0] = input, h[l] = layer l output
    std::vector<Mat> hdot;  // tangents, empty when not requested
  };

  /// Columns of X are samples. With Xdot, also propagates the tangent and
  /// returns it in Ydot.
  Mat forward(const Eigen::Ref<const Vec>& theta, const Mat& X, Cache* cache = nullptr) const;
  Mat forward_tangent(const Eigen::Ref<const Vec>& theta, const Mat& X, const Mat& Xdot, Mat& Ydot,
                      Cache* cache) const;

  /// Accumulates into grad the parameter gradient of sum(dY . Y) (+ sum(dYdot . Ydot)
  /// when the cache holds tangents). Optionally returns dL/dX.
  void backward(const Eigen::Ref<const Vec>& theta, const Cache& cache, const Mat& dY,
                const Mat* dYdot, Eigen::Ref<Vec> grad, Mat* dX = nullptr) const;

 private:
  std::vector<int> sizes_;
  std::vector<int> offsets_;  // start of each layer's W
  int num_params_ = 0;
  bool tanh_output_ = false;

  bool activated(std::size_t layer) const {
    return layer + 2 < sizes_.size() || tanh_output_;
  }
};

/// Adam with optional decoupled weight decay (AdamW).
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  Vec m;
  Vec v;
  std::int64_t t = 0;

  void reset(int n);
  void step(Eigen::Ref<Vec> theta, const Vec& grad, double lr);
};

/// Scales grad in place so its L2 norm is at most max_norm; returns the
/// pre-clip norm.
double clip_grad_norm(Vec& grad, double max_norm);

/// Linear warmup to base_lr, then cosine decay to min_lr at total_steps.
double cosine_lr(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps,
                 double base_lr, double min_lr = 0.0);

}  // namespace outbreak::nn
