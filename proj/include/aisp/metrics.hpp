#pragma once

// Segmentation quality: achievable segmentation accuracy, boundary
// recall/precision, and similarity-driven merging of superpixels into
// object proposals.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aisp/labels.hpp"
#include "aisp/tensor.hpp"

namespace aisp {

// Sum over regions of their largest overlap with one gt class, divided by the
// pixel count. Throws DimensionError on size mismatch.
double asa(const LabelImage& segmentation, const LabelImage& gt);

// A pixel is on a boundary when its right or lower neighbour carries a
// different id. Each edge between two regions is thus marked once.
std::vector<std::uint8_t> edge_pixels(const LabelImage& labels);

struct BoundaryScores {
  double recall = 0.0;
  double precision = 0.0;
};

// Matching within Chebyshev distance tol. An empty gt boundary gives recall 1;
// an empty segmentation boundary gives precision 1.
BoundaryScores boundary_metrics(const LabelImage& segmentation, const LabelImage& gt, std::size_t tol);

inline constexpr std::size_t kDefaultTolerance = 2;

struct ProposalSet {
  LabelImage labels;  // contiguous ids in row-major first-appearance order
  double threshold = 0.0;
  std::size_t count = 0;
};

// Greedy merging over the 4-adjacency graph: repeatedly unites the adjacent
// pair with the highest similarity of mean features while it exceeds the
// threshold (ties to the lower id pair). features: [C, H, W].
ProposalSet merge_proposals(const LabelImage& segmentation, const Tensor& features, double threshold);

struct MetricReport {
  double n_superpixels = 0.0;
  double asa = 0.0;
  double br = 0.0;
  double bp = 0.0;
  double runtime_ms = 0.0;
};

// Header n_superpixels,asa,br,bp,runtime_ms. Without timing the runtime
// column is written as 0 so reruns are byte-identical.
std::string metrics_csv(std::span<const MetricReport> rows, bool with_timing = true);

// Row-major first-appearance relabeling; returns the number of ids.
std::size_t relabel_contiguous(LabelImage& labels);

}  // namespace aisp
