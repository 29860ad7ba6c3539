#pragma once

#include <cstddef>
#include <optional>

#include "aisp/graph.hpp"

// Differentiable operations. Image tensors are NCHW.
namespace aisp::ops {

// x: [N,C,H,W], w: [F,C,k,k] with k odd, b: [F]. Zero padding.
Var conv2d(Var x, Var w, std::optional<Var> b, std::size_t stride = 1, std::size_t pad = 1);

// Exact 2x upsampling: x: [N,C,h,w], w: [C,F,2,2], b: [F] -> [N,F,2h,2w].
Var conv_transpose2d(Var x, Var w, std::optional<Var> b, std::size_t stride = 2);

// Disjoint 2x2 max; gradient goes to the first maximum in row-major order.
Var max_pool2(Var x);

Var leaky_relu(Var x, double slope);

// Softmax over axis 1 of an NCHW tensor.
Var softmax_channels(Var x);

Var concat_channels(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var mean(Var a);

// log(max(x, floor)); the gradient is zero where the floor is active.
Var log_clamped(Var a, double floor);

// Per (n, c) plane: subtract the spatial mean, divide by sqrt(variance + eps).
Var instance_norm(Var a, double eps = 1e-5);

}  // namespace aisp::ops
