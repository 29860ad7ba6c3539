#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace aisp {

/// Row-major H x W integer image.
struct LabelImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int32_t> ids;

  LabelImage() = default;
  LabelImage(std::size_t h, std::size_t w, std::int32_t fill = 0)
      : height(h), width(w), ids(h * w, fill) {}

  std::size_t size() const noexcept { return ids.size(); }
  std::int32_t at(std::size_t y, std::size_t x) const { return ids[y * width + x]; }
  std::int32_t& at(std::size_t y, std::size_t x) { return ids[y * width + x]; }

  friend bool operator==(const LabelImage&, const LabelImage&) = default;
};

/// Ground-truth semantic labels; every id lies in [0, num_classes).
struct LabelMap : LabelImage {
  std::int32_t num_classes = 0;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::int32_t classes, std::int32_t fill = 0)
      : LabelImage(h, w, fill), num_classes(classes) {}

  // Throws ConfigError when an id is negative or >= num_classes.
  void validate() const;
};

/// Superpixel ids produced by decoding or post-processing.
struct SuperpixelSegmentation : LabelImage {
  std::size_t count = 0;

  SuperpixelSegmentation() = default;
  SuperpixelSegmentation(std::size_t h, std::size_t w) : LabelImage(h, w, 0) {}
};

// Number of distinct ids in the image.
std::size_t distinct_ids(const LabelImage& image);

}  // namespace aisp
