#pragma once

// Patch-jitter augmentation. Both operations move pixels of the image and
// the label map together; with probability p_replace one moved region is
// overwritten with uniform noise and given a fresh class id.

#include <cstddef>

#include "aisp/labels.hpp"
#include "aisp/random.hpp"
#include "aisp/tensor.hpp"

namespace aisp {

struct AugmentConfig {
  std::size_t interval = 8;
  double p_replace = 0.25;
  bool shuffle = true;
  bool shift = true;

  void validate() const;  // throws ConfigError
};

enum class ShiftDirection { kHorizontal, kVertical };

// image: [3, H, W] (any channel count works).
struct AugmentedSample {
  Tensor image;
  LabelMap labels;
};

// Swaps two distinct S x S grid-aligned patches. Draw order: first patch,
// second patch, replacement coin, replaced patch choice, noise values.
AugmentedSample patch_shuffle(const Tensor& image, const LabelMap& labels,
                              const AugmentConfig& cfg, Rng& rng);

// Cyclically rotates an S x L strip (L x S when vertical) by o in [0, S)
// towards a random side. Draw order: strip row (column) in cells, L, strip
// start, o, side, replacement coin, noise values.
AugmentedSample random_shift(const Tensor& image, const LabelMap& labels,
                             const AugmentConfig& cfg, ShiftDirection direction, Rng& rng);

}  // namespace aisp
