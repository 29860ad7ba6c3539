#include "aisp/resize.hpp"

#include <algorithm>
#include <cmath>

#include "aisp/errors.hpp"

namespace aisp {

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = std::clamp((static_cast<double>(i) + 0.5) * ratio - 0.5, 0.0,
                                  static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

std::size_t nearest_index(std::size_t i, std::size_t in, std::size_t out) {
  const double src = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out);
  return std::min(static_cast<std::size_t>(src), in - 1);
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  require_rank(image, 3, "resize input");
  if (height == 0 || width == 0) throw ConfigError("resize target must be non-empty");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (H == height && W == width) return image;
  const auto ty = bilinear_taps(H, height), tx = bilinear_taps(W, width);
  Tensor out(Shape{C, height, width});
  const auto src = image.data();
  auto dst = out.data();
  for (std::size_t c = 0; c < C; ++c) {
    const double* plane = src.data() + c * H * W;
    for (std::size_t y = 0; y < height; ++y) {
      const double* r0 = plane + ty[y].lo * W;
      const double* r1 = plane + ty[y].hi * W;
      const double fy = ty[y].frac;
      for (std::size_t x = 0; x < width; ++x) {
        const auto& t = tx[x];
        const double top = r0[t.lo] + (r0[t.hi] - r0[t.lo]) * t.frac;
        const double bot = r1[t.lo] + (r1[t.hi] - r1[t.lo]) * t.frac;
        dst[(c * height + y) * width + x] = top + (bot - top) * fy;
      }
    }
  }
  return out;
}

LabelImage resize_nearest(const LabelImage& labels, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ConfigError("resize target must be non-empty");
  LabelImage out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = nearest_index(y, labels.height, height);
    for (std::size_t x = 0; x < width; ++x)
      out.at(y, x) = labels.at(sy, nearest_index(x, labels.width, width));
  }
  return out;
}

}  // namespace aisp
