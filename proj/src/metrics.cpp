#include "aisp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <queue>
#include <set>
#include <unordered_map>

#include "aisp/disjoint_sets.hpp"
#include "aisp/errors.hpp"

namespace aisp {

namespace {

void require_same_size(const LabelImage& a, const LabelImage& b) {
  if (a.height != b.height || a.width != b.width)
    throw DimensionError("label images differ in size: " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width));
}

// Chebyshev dilation by tol, separable.
std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, std::size_t H, std::size_t W,
                                 std::size_t tol) {
  if (tol == 0) return mask;
  std::vector<std::uint8_t> rows(mask.size(), 0), out(mask.size(), 0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      if (!mask[y * W + x]) continue;
      const std::size_t lo = x >= tol ? x - tol : 0, hi = std::min(W - 1, x + tol);
      for (std::size_t j = lo; j <= hi; ++j) rows[y * W + j] = 1;
    }
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      if (!rows[y * W + x]) continue;
      const std::size_t lo = y >= tol ? y - tol : 0, hi = std::min(H - 1, y + tol);
      for (std::size_t i = lo; i <= hi; ++i) out[i * W + x] = 1;
    }
  return out;
}

double matched_fraction(const std::vector<std::uint8_t>& target, const std::vector<std::uint8_t>& near) {
  std::size_t total = 0, hit = 0;
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target[i]) {
      ++total;
      hit += near[i];
    }
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

double asa(const LabelImage& segmentation, const LabelImage& gt) {
  require_same_size(segmentation, gt);
  if (gt.size() == 0) throw DimensionError("asa of an empty image");
  std::map<std::int32_t, std::unordered_map<std::int32_t, std::size_t>> overlap;
  for (std::size_t i = 0; i < gt.size(); ++i) ++overlap[segmentation.ids[i]][gt.ids[i]];
  std::size_t covered = 0;
  for (const auto& [region, classes] : overlap) {
    std::size_t best = 0;
    for (const auto& [cls, n] : classes) best = std::max(best, n);
    covered += best;
  }
  return static_cast<double>(covered) / static_cast<double>(gt.size());
}

std::vector<std::uint8_t> edge_pixels(const LabelImage& labels) {
  const std::size_t H = labels.height, W = labels.width;
  std::vector<std::uint8_t> mask(H * W, 0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const auto id = labels.at(y, x);
      mask[y * W + x] = (x + 1 < W && labels.at(y, x + 1) != id) || (y + 1 < H && labels.at(y + 1, x) != id);
    }
  return mask;
}

BoundaryScores boundary_metrics(const LabelImage& segmentation, const LabelImage& gt, std::size_t tol) {
  require_same_size(segmentation, gt);
  const std::size_t H = gt.height, W = gt.width;
  const auto seg_edges = edge_pixels(segmentation), gt_edges = edge_pixels(gt);
  return {matched_fraction(gt_edges, dilate(seg_edges, H, W, tol)),
          matched_fraction(seg_edges, dilate(gt_edges, H, W, tol))};
}

std::size_t relabel_contiguous(LabelImage& labels) {
  std::unordered_map<std::int32_t, std::int32_t> remap;
  for (auto& id : labels.ids) {
    const auto [it, fresh] = remap.emplace(id, static_cast<std::int32_t>(remap.size()));
    id = it->second;
  }
  return remap.size();
}

ProposalSet merge_proposals(const LabelImage& segmentation, const Tensor& features, double threshold) {
  require_rank(features, 3, "proposal features");
  if (features.dim(1) != segmentation.height || features.dim(2) != segmentation.width)
    throw DimensionError("features " + shape_str(features.shape()) + " do not match the segmentation");
  const std::size_t H = segmentation.height, W = segmentation.width, C = features.dim(0);

  LabelImage base = segmentation;
  const std::size_t R = relabel_contiguous(base);

  std::vector<double> sums(R * C, 0.0);
  std::vector<double> counts(R, 0.0);
  const auto f = features.data();
  for (std::size_t i = 0; i < H * W; ++i) {
    const auto r = static_cast<std::size_t>(base.ids[i]);
    counts[r] += 1.0;
    for (std::size_t c = 0; c < C; ++c) sums[r * C + c] += f[c * H * W + i];
  }
  std::vector<std::set<std::size_t>> adj(R);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const auto a = static_cast<std::size_t>(base.at(y, x));
      if (x + 1 < W) {
        const auto b = static_cast<std::size_t>(base.at(y, x + 1));
        if (a != b) adj[a].insert(b), adj[b].insert(a);
      }
      if (y + 1 < H) {
        const auto b = static_cast<std::size_t>(base.at(y + 1, x));
        if (a != b) adj[a].insert(b), adj[b].insert(a);
      }
    }

  auto sim = [&](std::size_t a, std::size_t b) {
    double l1 = 0.0;
    for (std::size_t c = 0; c < C; ++c) l1 += std::abs(sums[a * C + c] / counts[a] - sums[b * C + c] / counts[b]);
    return 2.0 / (1.0 + std::exp(l1));
  };

  // Lazy max-queue; an entry is stale once either endpoint changed version.
  struct Entry {
    double s;
    std::size_t a, b;  // a < b
    std::size_t va, vb;
  };
  auto worse = [](const Entry& x, const Entry& y) {
    if (x.s != y.s) return x.s < y.s;
    if (x.a != y.a) return x.a > y.a;
    return x.b > y.b;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> queue(worse);
  std::vector<std::size_t> version(R, 0);
  std::vector<bool> alive(R, true);
  auto push = [&](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    const double s = sim(a, b);
    if (s > threshold) queue.push({s, a, b, version[a], version[b]});
  };
  for (std::size_t a = 0; a < R; ++a)
    for (auto b : adj[a])
      if (a < b) push(a, b);

  DisjointSets sets(R);
  while (!queue.empty()) {
    const Entry e = queue.top();
    queue.pop();
    if (!alive[e.a] || !alive[e.b] || version[e.a] != e.va || version[e.b] != e.vb) continue;
    // Fold b into a.
    for (std::size_t c = 0; c < C; ++c) sums[e.a * C + c] += sums[e.b * C + c];
    counts[e.a] += counts[e.b];
    alive[e.b] = false;
    sets.unite(e.b, e.a);
    for (auto n : adj[e.b]) {
      adj[n].erase(e.b);
      if (n != e.a) adj[n].insert(e.a), adj[e.a].insert(n);
    }
    adj[e.a].erase(e.b);
    adj[e.b].clear();
    ++version[e.a];
    for (auto n : adj[e.a]) push(e.a, n);
  }

  ProposalSet out;
  out.threshold = threshold;
  out.labels = base;
  for (auto& id : out.labels.ids) id = static_cast<std::int32_t>(sets.find(static_cast<std::size_t>(id)));
  out.count = relabel_contiguous(out.labels);
  return out;
}

std::string metrics_csv(std::span<const MetricReport> rows, bool with_timing) {
  std::string out = "n_superpixels,asa,br,bp,runtime_ms\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.1f,%.6f,%.6f,%.6f,%.3f\n", r.n_superpixels, r.asa, r.br, r.bp,
                  with_timing ? r.runtime_ms : 0.0);
    out += buf;
  }
  return out;
}

}  // namespace aisp
