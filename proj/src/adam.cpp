#include "aisp/adam.hpp"

#include <cmath>

#include "aisp/errors.hpp"

namespace aisp {

AdamState AdamState::for_parameters(std::span<const Tensor> params, double beta1, double beta2,
                                    double epsilon) {
  AdamState state;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.epsilon = epsilon;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.shape(), 0.0);
    state.second_moment.emplace_back(p.shape(), 0.0);
  }
  return state;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size())
    throw DimensionError("adam_step: parameter/gradient/moment counts differ");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].shape() != grads[i].shape() ||
        params[i].shape() != state.first_moment[i].shape() ||
        params[i].shape() != state.second_moment[i].shape())
      throw DimensionError("adam_step: shape mismatch at parameter " + std::to_string(i));

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.epsilon);
    }
  }
}

}  // namespace aisp
