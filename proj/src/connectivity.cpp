#include <algorithm>
#include <set>

#include "aisp/association.hpp"
#include "aisp/disjoint_sets.hpp"
#include "aisp/errors.hpp"

namespace aisp {

namespace {

constexpr std::size_t kUnset = static_cast<std::size_t>(-1);

// Two-pass 4-connected labeling; components numbered in row-major order of
// their first pixel.
std::vector<std::size_t> label_components(const LabelImage& image, std::size_t& count) {
  const std::size_t H = image.height, W = image.width;
  DisjointSets sets(H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t p = y * W + x;
      if (x > 0 && image.ids[p - 1] == image.ids[p]) sets.unite(p, p - 1);
      if (y > 0 && image.ids[p - W] == image.ids[p]) sets.unite(p, p - W);
    }
  std::vector<std::size_t> root_to_comp(H * W, kUnset), comp(H * W);
  count = 0;
  for (std::size_t p = 0; p < H * W; ++p) {
    const std::size_t r = sets.find(p);
    if (root_to_comp[r] == kUnset) root_to_comp[r] = count++;
    comp[p] = root_to_comp[r];
  }
  return comp;
}

}  // namespace

SuperpixelSegmentation enforce_connectivity(const LabelImage& segmentation, std::size_t min_size) {
  if (min_size < 1) throw ConfigError("enforce_connectivity: min_size must be at least 1");
  const std::size_t H = segmentation.height, W = segmentation.width;
  if (segmentation.ids.size() != H * W) throw DimensionError("segmentation size does not match dims");

  std::size_t count = 0;
  const auto comp = label_components(segmentation, count);

  std::vector<std::size_t> sizes(count, 0);
  for (auto c : comp) ++sizes[c];
  std::vector<std::set<std::size_t>> adjacent(count);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t a = comp[y * W + x];
      if (x + 1 < W && comp[y * W + x + 1] != a) {
        adjacent[a].insert(comp[y * W + x + 1]);
        adjacent[comp[y * W + x + 1]].insert(a);
      }
      if (y + 1 < H && comp[(y + 1) * W + x] != a) {
        adjacent[a].insert(comp[(y + 1) * W + x]);
        adjacent[comp[(y + 1) * W + x]].insert(a);
      }
    }

  // Absorb undersized fragments until none with a neighbor remains.
  DisjointSets merged(count);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t c = 0; c < count; ++c) {
      if (merged.find(c) != c || sizes[c] >= min_size) continue;
      std::size_t best = kUnset;
      for (auto n : adjacent[c]) {
        const std::size_t r = merged.find(n);
        if (r == c) continue;
        if (best == kUnset || sizes[r] > sizes[best] || (sizes[r] == sizes[best] && r < best))
          best = r;
      }
      if (best == kUnset) continue;
      merged.unite(c, best);
      sizes[best] += sizes[c];
      for (auto n : adjacent[c]) {
        const std::size_t r = merged.find(n);
        if (r != best) adjacent[best].insert(r);
      }
      adjacent[c].clear();
      changed = true;
    }
  }

  SuperpixelSegmentation out(H, W);
  std::vector<std::int32_t> relabel(count, -1);
  std::int32_t next = 0;
  for (std::size_t p = 0; p < H * W; ++p) {
    const std::size_t r = merged.find(comp[p]);
    if (relabel[r] < 0) relabel[r] = next++;
    out.ids[p] = relabel[r];
  }
  out.count = static_cast<std::size_t>(next);
  return out;
}

}  // namespace aisp
