#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "aisp/graph.hpp"
#include "aisp/random.hpp"
#include "aisp/tensor.hpp"

namespace testing_util {

inline aisp::Tensor random_tensor(aisp::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  aisp::Rng rng(seed);
  return aisp::Tensor::uniform(std::move(shape), lo, hi, rng);
}

inline double max_abs_diff(const aisp::Tensor& a, const aisp::Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Softmax-normalized random association map.
inline aisp::Tensor random_q(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  aisp::Tensor z = random_tensor({n, 9, h, w}, seed, -2.0, 2.0);
  aisp::Tensor q(z.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::size_t t = 0; t < 9; ++t) s += std::exp(z.at(b, t, y, x));
        for (std::size_t t = 0; t < 9; ++t) q.at(b, t, y, x) = std::exp(z.at(b, t, y, x)) / s;
      }
  return q;
}

// Central difference of a scalar function of one tensor at coordinate i.
inline double central_difference(const std::function<double(const aisp::Tensor&)>& f, aisp::Tensor x,
                                 std::size_t i, double eps) {
  const double x0 = x[i];
  x[i] = x0 + eps;
  const double up = f(x);
  x[i] = x0 - eps;
  const double down = f(x);
  return (up - down) / (2.0 * eps);
}

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

}  // namespace testing_util
