#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "occage/numcore/tensor.hpp"

namespace occage::nc {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // true: AdamW (param -= lr*wd*param before the moment update).
  // false: classic Adam with wd folded into the gradient.
  bool decoupled = true;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  double lr() const { return opts_.lr; }
  void set_lr(double lr) { opts_.lr = lr; }
  std::size_t steps() const { return step_; }
  const AdamOptions& options() const { return opts_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }

  void zero_grad() {
    for (const auto& p : params_) p.zero_grad();
  }

  void step() {
    for (const auto& p : params_)
      if (!p.has_grad()) throw ValidationError("optimizer step: parameter has no gradient");
    ++step_;
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(opts_.beta1, t);
    const double bc2 = 1.0 - std::pow(opts_.beta2, t);
    const double b1 = opts_.beta1, b2 = opts_.beta2, eps = opts_.eps, lr = opts_.lr;
    const double step_size = lr / bc1, inv_root_bc2 = 1.0 / std::sqrt(bc2);
    const double shrink = opts_.decoupled ? 1.0 - lr * opts_.weight_decay : 1.0;
    const double coupled = opts_.decoupled ? 0.0 : opts_.weight_decay;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const std::size_t n = params_[k].numel();
      double* __restrict w = params_[k].mutable_data().data();
      const double* __restrict g = params_[k].grad().data();
      double* __restrict m = m_[k].data();
      double* __restrict v = v_[k].data();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i] + coupled * w[i];
        w[i] *= shrink;
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_root_bc2 + eps);
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  AdamOptions opts_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

inline Adam make_adam(std::vector<Tensor> params, double lr) {
  AdamOptions o;
  o.lr = lr;
  o.decoupled = false;
  return Adam(std::move(params), o);
}

inline Adam make_adamw(std::vector<Tensor> params, double lr, double weight_decay) {
  AdamOptions o;
  o.lr = lr;
  o.weight_decay = weight_decay;
  return Adam(std::move(params), o);
}

// Multiplies the learning rate by `factor` once `patience` consecutive
// epochs pass without the metric improving on the best value by more than
// `threshold` (relative). The bad-epoch counter resets after a reduction.
class ReduceLrOnPlateau {
 public:
  ReduceLrOnPlateau(double factor, std::size_t patience, double threshold = 1e-4)
      : factor_(factor), patience_(patience), threshold_(threshold) {
    if (!(factor > 0.0 && factor < 1.0)) throw ValidationError("plateau scheduler: factor must lie in (0, 1)");
  }

  // Returns true when the learning rate was reduced on this call.
  bool step(double metric, Adam& opt) {
    double lr = opt.lr();
    const bool fired = step(metric, lr);
    opt.set_lr(lr);
    return fired;
  }

  bool step(double metric, double& lr) {
    if (metric < best_ * (1.0 - threshold_)) {
      best_ = metric;
      bad_epochs_ = 0;
      return false;
    }
    if (++bad_epochs_ >= patience_) {
      lr *= factor_;
      bad_epochs_ = 0;
      ++reductions_;
      return true;
    }
    return false;
  }

  double best() const { return best_; }
  std::size_t bad_epochs() const { return bad_epochs_; }
  std::size_t reductions() const { return reductions_; }

 private:
  double factor_;
  std::size_t patience_;
  double threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
  std::size_t reductions_ = 0;
};

}  // namespace occage::nc
