#pragma once

// Inference pipeline: resize so the seed grid holds roughly the requested
// number of cells, decode the association map, map ids back to the input
// resolution, and enforce connectivity.

#include <cstddef>
#include <utility>

#include "aisp/association.hpp"
#include "aisp/labels.hpp"
#include "aisp/model.hpp"

namespace aisp {

// Working size whose grid has about `count` cells: both sides are scaled by
// the same factor and rounded to the nearest multiple of the interval (at
// least one cell).
std::pair<std::size_t, std::size_t> working_size(std::size_t height, std::size_t width,
                                                 std::size_t interval, std::size_t count);

// Segments a [3, H, W] image. min_size 0 picks the default for the effective
// cell size at the input resolution.
SuperpixelSegmentation segment_image(const Model& model, const Tensor& image, std::size_t count,
                                     std::size_t min_size = 0);

// Same pipeline starting from a precomputed association map at working size.
SuperpixelSegmentation decode_segmentation(const Tensor& q, std::size_t height, std::size_t width,
                                           std::size_t interval, std::size_t min_size = 0);

// Regular grid baseline: the center-one-hot map pushed through the pipeline.
SuperpixelSegmentation grid_segmentation(std::size_t height, std::size_t width, std::size_t interval,
                                         std::size_t count);

// Copy of the image with pixels on the inner side of every region boundary
// painted pure red.
Tensor overlay_boundaries(const Tensor& image, const LabelImage& labels);

}  // namespace aisp
