#pragma once

#include <vector>

#include "usrgr/autodiff.hpp"
#include "usrgr/tensor.hpp"

namespace usrgr {

template <typename T>
struct AdamConfig {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

/// Per-parameter-set optimizer state; moment tensors mirror parameter shapes.
template <typename T>
struct AdamState {
  long step_count = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
};

/// One Adam update with bias correction. Initializes moments on first use;
/// rejects any shape disagreement between params, grads, and state.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state, const AdamConfig<T>& cfg);

/// Convenience wrapper around graph leaves: step() consumes each param's
/// accumulated grad, zero_grad() clears them.
template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<ad::Var<T>> params, AdamConfig<T> cfg) : params_(std::move(params)), cfg_(cfg) {}

  void step() {
    std::vector<Tensor<T>*> p;
    std::vector<const Tensor<T>*> g;
    p.reserve(params_.size());
    g.reserve(params_.size());
    for (auto& v : params_) {
      ad::ensure_grad(*v);
      p.push_back(&v->value);
      g.push_back(&v->grad);
    }
    adam_step(p, g, state_, cfg_);
  }

  void zero_grad() {
    for (auto& v : params_) v->grad = Tensor<T>(v->value.shape());
  }

  const AdamState<T>& state() const { return state_; }
  const AdamConfig<T>& config() const { return cfg_; }

 private:
  std::vector<ad::Var<T>> params_;
  AdamConfig<T> cfg_;
  AdamState<T> state_;
};

}  // namespace usrgr
