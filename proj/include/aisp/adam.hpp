#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aisp/tensor.hpp"

namespace aisp {

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // Zero moments shaped like `params`.
  static AdamState for_parameters(std::span<const Tensor> params, double beta1 = 0.9,
                                  double beta2 = 0.999, double epsilon = 1e-8);
};

// One bias-corrected Adam update in place. Throws DimensionError when the
// parameter, gradient and moment lists do not line up.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               double lr);

}  // namespace aisp
