#include "aisp/segment.hpp"

#include <algorithm>
#include <cmath>

#include "aisp/boundary_loss.hpp"
#include "aisp/errors.hpp"
#include "aisp/resize.hpp"

namespace aisp {

std::pair<std::size_t, std::size_t> working_size(std::size_t height, std::size_t width,
                                                 std::size_t interval, std::size_t count) {
  if (count == 0) throw ConfigError("superpixel count must be positive");
  const double s = static_cast<double>(interval);
  const double scale = std::sqrt(static_cast<double>(count) * s * s /
                                 (static_cast<double>(height) * static_cast<double>(width)));
  auto snap = [&](std::size_t side) {
    const double cells = std::round(static_cast<double>(side) * scale / s);
    return static_cast<std::size_t>(std::max(1.0, cells)) * interval;
  };
  return {snap(height), snap(width)};
}

SuperpixelSegmentation decode_segmentation(const Tensor& q, std::size_t height, std::size_t width,
                                           std::size_t interval, std::size_t min_size) {
  require_rank(q, 4, "association map");
  const GridSpec grid = GridSpec::create(q.dim(2), q.dim(3), interval);
  const auto decoded = hard_assign(q, grid);
  const LabelImage full = resize_nearest(decoded.front(), height, width);
  if (min_size == 0) {
    // Cell side as seen at the input resolution.
    const double side = static_cast<double>(interval) *
                        std::sqrt(static_cast<double>(height * width) / static_cast<double>(q.dim(2) * q.dim(3)));
    min_size = default_min_size(static_cast<std::size_t>(std::lround(side)));
  }
  return enforce_connectivity(full, min_size);
}

SuperpixelSegmentation segment_image(const Model& model, const Tensor& image, std::size_t count,
                                     std::size_t min_size) {
  require_rank(image, 3, "image");
  const std::size_t H = image.dim(1), W = image.dim(2), S = model.config().interval;
  const auto [h, w] = working_size(H, W, S, count);
  const Tensor resized = resize_bilinear(image, h, w).reshaped(Shape{1, image.dim(0), h, w});
  return decode_segmentation(model.infer(resized), H, W, S, min_size);
}

SuperpixelSegmentation grid_segmentation(std::size_t height, std::size_t width, std::size_t interval,
                                         std::size_t count) {
  const auto [h, w] = working_size(height, width, interval, count);
  return decode_segmentation(center_one_hot(1, GridSpec::create(h, w, interval)), height, width, interval);
}

Tensor overlay_boundaries(const Tensor& image, const LabelImage& labels) {
  require_rank(image, 3, "overlay image");
  if (image.dim(0) != 3 || image.dim(1) != labels.height || image.dim(2) != labels.width)
    throw DimensionError("overlay image " + shape_str(image.shape()) + " does not match the labels");
  Tensor out = image;
  const auto mask = boundary_mask(labels);
  const std::size_t n = labels.size();
  auto d = out.data();
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i]) d[i] = 1.0, d[n + i] = 0.0, d[2 * n + i] = 0.0;
  return out;
}

}  // namespace aisp
