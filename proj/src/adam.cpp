#include "usrgr/adam.hpp"

#include <cmath>

namespace usrgr {

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state, const AdamConfig<T>& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: params/grads count mismatch");
  if (state.first_moment.empty()) {
    for (const Tensor<T>* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: state size mismatch");

  state.step_count += 1;
  const T b1t = static_cast<T>(std::pow(static_cast<double>(cfg.beta1), static_cast<double>(state.step_count)));
  const T b2t = static_cast<T>(std::pow(static_cast<double>(cfg.beta2), static_cast<double>(state.step_count)));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    const Tensor<T>& g = *grads[i];
    Tensor<T>& m = state.first_moment[i];
    Tensor<T>& v = state.second_moment[i];
    if (!p.same_shape(g) || !p.same_shape(m))
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (T(1) - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (T(1) - cfg.beta2) * g[j] * g[j];
      const T mhat = m[j] / (T(1) - b1t);
      const T vhat = v[j] / (T(1) - b2t);
      p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

template void adam_step<float>(const std::vector<Tensor<float>*>&, const std::vector<const Tensor<float>*>&,
                               AdamState<float>&, const AdamConfig<float>&);
template void adam_step<double>(const std::vector<Tensor<double>*>&, const std::vector<const Tensor<double>*>&,
                                AdamState<double>&, const AdamConfig<double>&);

}  // namespace usrgr
