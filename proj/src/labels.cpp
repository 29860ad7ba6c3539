#include "aisp/labels.hpp"

#include <algorithm>
#include <string>

#include "aisp/errors.hpp"

namespace aisp {

void LabelMap::validate() const {
  if (ids.size() != height * width) throw ConfigError("label map size does not match dims");
  for (auto id : ids)
    if (id < 0 || id >= num_classes)
      throw ConfigError("label id " + std::to_string(id) + " outside [0, " +
                        std::to_string(num_classes) + ")");
}

std::size_t distinct_ids(const LabelImage& image) {
  std::vector<std::int32_t> sorted = image.ids;
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

}  // namespace aisp
