#include "aisp/boundary_loss.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>

#include "aisp/errors.hpp"

namespace aisp {

std::vector<std::uint8_t> boundary_mask(const LabelImage& labels) {
  const std::size_t H = labels.height, W = labels.width;
  std::vector<std::uint8_t> mask(H * W, 0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const auto id = labels.at(y, x);
      if ((x > 0 && labels.at(y, x - 1) != id) || (x + 1 < W && labels.at(y, x + 1) != id) ||
          (y > 0 && labels.at(y - 1, x) != id) || (y + 1 < H && labels.at(y + 1, x) != id))
        mask[y * W + x] = 1;
    }
  return mask;
}

namespace {

bool make_patch(const LabelImage& labels, std::size_t cy, std::size_t cx, std::size_t k,
                BoundaryPatch& out) {
  const std::size_t half = k / 2;
  if (cy < half || cx < half || cy + half >= labels.height || cx + half >= labels.width)
    return false;
  const std::size_t r0 = cy - half, c0 = cx - half;
  std::int32_t a = labels.at(r0, c0), b = a;
  bool have_b = false;
  for (std::size_t y = r0; y < r0 + k; ++y)
    for (std::size_t x = c0; x < c0 + k; ++x) {
      const auto id = labels.at(y, x);
      if (id == a) continue;
      if (!have_b) {
        b = id;
        have_b = true;
      } else if (id != b) {
        return false;
      }
    }
  if (!have_b) return false;
  if (b < a) std::swap(a, b);
  BoundaryPatch patch{r0, c0, k, a, b, {}, {}};
  for (std::size_t y = r0; y < r0 + k; ++y)
    for (std::size_t x = c0; x < c0 + k; ++x)
      (labels.at(y, x) == a ? patch.members_a : patch.members_b).push_back(y * labels.width + x);
  if (patch.members_a.size() < 2 || patch.members_b.size() < 2) return false;
  out = std::move(patch);
  return true;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(i)));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::vector<BoundaryPatch> sample_patches(const LabelImage& labels, std::size_t patch_size,
                                          std::size_t max_patches, Rng& rng) {
  if (patch_size % 2 == 0) throw ConfigError("patch size must be odd");
  if (max_patches < 1) throw ConfigError("max_patches must be at least 1");
  const auto mask = boundary_mask(labels);
  std::vector<std::size_t> candidates;
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (mask[p]) candidates.push_back(p);

  std::vector<BoundaryPatch> out;
  const std::size_t n = candidates.size();
  for (std::size_t i = 0; i < n && out.size() < max_patches; ++i) {
    const auto j = static_cast<std::size_t>(
        rand_int(rng, static_cast<std::int64_t>(i), static_cast<std::int64_t>(n)));
    std::swap(candidates[i], candidates[j]);
    BoundaryPatch patch;
    if (make_patch(labels, candidates[i] / labels.width, candidates[i] % labels.width, patch_size,
                   patch))
      out.push_back(std::move(patch));
  }
  return out;
}

GroupPartition partition_patch(const BoundaryPatch& patch, Rng& rng) {
  GroupPartition part;
  auto split = [&rng](std::vector<std::size_t> members, std::vector<std::size_t>& first,
                      std::vector<std::size_t>& second) {
    shuffle(members, rng);
    const std::size_t half = members.size() / 2;
    first.assign(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(half));
    second.assign(members.begin() + static_cast<std::ptrdiff_t>(half), members.end());
  };
  split(patch.members_a, part.f1, part.f2);
  split(patch.members_b, part.g1, part.g2);
  return part;
}

std::vector<double> group_mean(std::span<const std::vector<double>> features) {
  if (features.empty()) throw UsageError("group_mean of an empty set");
  std::vector<double> mean(features[0].size(), 0.0);
  for (const auto& f : features) {
    if (f.size() != mean.size()) throw DimensionError("group_mean: vectors differ in length");
    for (std::size_t d = 0; d < f.size(); ++d) mean[d] += f[d];
  }
  for (auto& v : mean) v /= static_cast<double>(features.size());
  return mean;
}

double similarity(std::span<const double> f, std::span<const double> g) {
  if (f.size() != g.size()) throw DimensionError("similarity: vectors differ in length");
  double l1 = 0.0;
  for (std::size_t d = 0; d < f.size(); ++d) l1 += std::abs(f[d] - g[d]);
  return 2.0 / (1.0 + std::exp(l1));
}

namespace {

// Group order: f1, f2, g1, g2. Pairs (0,1) and (2,3) are within-label,
// (0,2) and (1,3) cross-label.
struct PairTerm {
  int a, b;
  bool within;
};
constexpr std::array<PairTerm, 4> kPairs{{{0, 1, true}, {2, 3, true}, {0, 2, false}, {1, 3, false}}};

std::array<const std::vector<std::size_t>*, 4> groups_of(const GroupPartition& p) {
  return {&p.f1, &p.f2, &p.g1, &p.g2};
}

void check_sample(const Tensor& e, const PatchSample& s) {
  if (s.image >= e.dim(0)) throw DimensionError("patch refers to image outside the batch");
  const std::size_t P = e.dim(2) * e.dim(3);
  for (const auto* group : groups_of(s.partition)) {
    if (group->empty()) throw UsageError("boundary patch group is empty");
    for (auto p : *group)
      if (p >= P) throw DimensionError("patch member outside the embedding");
  }
}

// Group means, [4][D].
std::array<std::vector<double>, 4> means_of(const Tensor& e, const PatchSample& s) {
  const std::size_t D = e.dim(1), P = e.dim(2) * e.dim(3);
  std::array<std::vector<double>, 4> means;
  const auto groups = groups_of(s.partition);
  for (int k = 0; k < 4; ++k) {
    means[k].assign(D, 0.0);
    for (std::size_t d = 0; d < D; ++d) {
      for (auto p : *groups[k]) means[k][d] += e[(s.image * D + d) * P + p];
      means[k][d] /= static_cast<double>(groups[k]->size());
    }
  }
  return means;
}

double clamped(double s) { return std::clamp(s, kSimilarityClamp, 1.0 - kSimilarityClamp); }

}  // namespace

Var boundary_loss(Var embedding, std::span<const PatchSample> samples) {
  Graph& g = *embedding.graph;
  const Tensor& e = embedding.value();
  require_rank(e, 4, "pixel embedding");
  if (samples.empty()) return g.constant(Tensor::scalar(0.0));
  for (const auto& s : samples) check_sample(e, s);

  const double inv_count = 1.0 / static_cast<double>(samples.size());
  double total = 0.0;
  std::uint64_t digest = 14695981039346656037ULL;
  auto note = [&](std::uint64_t code) { digest = (digest ^ code) * 1099511628211ULL; };
  for (const auto& s : samples) {
    const auto means = means_of(e, s);
    for (const auto& pair : kPairs) {
      const double raw = similarity(means[pair.a], means[pair.b]);
      const double sim = clamped(raw);
      total += pair.within ? -0.5 * std::log(sim) : -0.5 * std::log(1.0 - sim);
      if (g.tracking_branches()) {
        note(raw < kSimilarityClamp ? 0 : raw > 1.0 - kSimilarityClamp ? 2 : 1);
        for (std::size_t d = 0; d < means[pair.a].size(); ++d)
          note(means[pair.a][d] > means[pair.b][d] ? 1 : means[pair.a][d] < means[pair.b][d] ? 2 : 3);
      }
    }
  }
  if (g.tracking_branches()) g.note_branches(digest);

  auto kept = std::make_shared<std::vector<PatchSample>>(samples.begin(), samples.end());
  return g.record(Tensor::scalar(total * inv_count), {embedding},
                  [embedding, kept, inv_count](Graph& gr, const Tensor& gy) {
                    const Tensor& e = gr.value(embedding);
                    auto ge = gr.grad_accumulator(embedding).data();
                    const std::size_t D = e.dim(1), P = e.dim(2) * e.dim(3);
                    const double scale = gy[0] * inv_count;
                    for (const auto& s : *kept) {
                      const auto means = means_of(e, s);
                      const auto groups = groups_of(s.partition);
                      std::array<std::vector<double>, 4> gmean;
                      for (auto& v : gmean) v.assign(D, 0.0);
                      for (const auto& pair : kPairs) {
                        const double raw = similarity(means[pair.a], means[pair.b]);
                        if (raw < kSimilarityClamp || raw > 1.0 - kSimilarityClamp) continue;
                        const double dloss_dsim = pair.within ? -0.5 / raw : 0.5 / (1.0 - raw);
                        const double dsim_dl1 = -raw * (1.0 - 0.5 * raw);
                        const double coef = scale * dloss_dsim * dsim_dl1;
                        for (std::size_t d = 0; d < D; ++d) {
                          const double diff = means[pair.a][d] - means[pair.b][d];
                          const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                          gmean[pair.a][d] += coef * sgn;
                          gmean[pair.b][d] -= coef * sgn;
                        }
                      }
                      for (int k = 0; k < 4; ++k) {
                        const double inv = 1.0 / static_cast<double>(groups[k]->size());
                        for (std::size_t d = 0; d < D; ++d)
                          for (auto p : *groups[k]) ge[(s.image * D + d) * P + p] += gmean[k][d] * inv;
                      }
                    }
                  });
}

Var patch_loss(Var embedding, const PatchSample& sample) {
  return boundary_loss(embedding, std::span<const PatchSample>(&sample, 1));
}

std::vector<PatchSample> sample_boundary_batch(std::span<const LabelMap> labels,
                                               std::size_t patch_size, std::size_t max_patches,
                                               Rng& rng) {
  std::vector<PatchSample> out;
  for (std::size_t n = 0; n < labels.size(); ++n)
    for (auto& patch : sample_patches(labels[n], patch_size, max_patches, rng)) {
      GroupPartition part = partition_patch(patch, rng);
      out.push_back(PatchSample{n, std::move(patch), std::move(part)});
    }
  return out;
}

Var boundary_loss(Var embedding, const LabelMap& labels, std::size_t patch_size,
                  std::size_t max_patches, Rng& rng) {
  const auto samples =
      sample_boundary_batch(std::span<const LabelMap>(&labels, 1), patch_size, max_patches, rng);
  return boundary_loss(embedding, samples);
}

}  // namespace aisp
