#pragma once

#include <cstddef>

#include "aisp/labels.hpp"
#include "aisp/tensor.hpp"

namespace aisp {

// Bilinear resampling of a [C, H, W] image with half-pixel centres and edge
// clamping.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

// Nearest-neighbour resampling of an id image (half-pixel centres).
LabelImage resize_nearest(const LabelImage& labels, std::size_t height, std::size_t width);

}  // namespace aisp
