#pragma once

// Boundary-perceiving loss on pixel embeddings. Patches that straddle exactly
// two semantic regions are split into four groups (two per label); the loss
// pulls the two same-label group means together and pushes cross-label means
// apart through a bounded L1 similarity.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "aisp/graph.hpp"
#include "aisp/labels.hpp"
#include "aisp/random.hpp"

namespace aisp {

struct BoundaryPatch {
  std::size_t row = 0;  // top-left corner of the K x K window
  std::size_t col = 0;
  std::size_t size = 0;
  std::int32_t label_a = 0;  // smaller of the two ids
  std::int32_t label_b = 0;
  std::vector<std::size_t> members_a;  // flat pixel indices y * W + x
  std::vector<std::size_t> members_b;
};

struct GroupPartition {
  std::vector<std::size_t> f1, f2;  // split of members_a
  std::vector<std::size_t> g1, g2;  // split of members_b
};

struct PatchSample {
  std::size_t image = 0;  // batch index into the embedding tensor
  BoundaryPatch patch;
  GroupPartition partition;
};

inline constexpr double kSimilarityClamp = 1e-6;
inline constexpr std::size_t kDefaultMaxPatches = 32;

// True where a pixel has a 4-neighbor with a different id.
std::vector<std::uint8_t> boundary_mask(const LabelImage& labels);

// Up to max_patches K x K windows centred on boundary pixels drawn without
// replacement; a window is kept when it lies inside the image, holds exactly
// two ids, and each id covers at least two pixels.
std::vector<BoundaryPatch> sample_patches(const LabelImage& labels, std::size_t patch_size,
                                          std::size_t max_patches, Rng& rng);

// Random even split of each label's members.
GroupPartition partition_patch(const BoundaryPatch& patch, Rng& rng);

std::vector<double> group_mean(std::span<const std::vector<double>> features);

// 2 / (1 + exp(||f - g||_1)).
double similarity(std::span<const double> f, std::span<const double> g);

// Loss of one patch; embedding is [N, D, H, W].
Var patch_loss(Var embedding, const PatchSample& sample);

// Mean patch loss; a zero constant when there are no patches.
Var boundary_loss(Var embedding, std::span<const PatchSample> samples);

// Samples patches and partitions for every image of a batch, in batch order.
std::vector<PatchSample> sample_boundary_batch(std::span<const LabelMap> labels,
                                               std::size_t patch_size, std::size_t max_patches,
                                               Rng& rng);

// Per-image convenience: sample, partition, and evaluate.
Var boundary_loss(Var embedding, const LabelMap& labels, std::size_t patch_size,
                  std::size_t max_patches, Rng& rng);

}  // namespace aisp
