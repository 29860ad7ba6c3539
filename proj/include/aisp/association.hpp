#pragma once

// Pixel-to-grid association framework: the seed grid, the 3x3 neighbor
// layout, soft aggregation of pixel properties into cells and their
// reconstruction back to pixels, the reconstruction losses, and decoding.
//
// Association maps are NCHW tensors [N, 9, H, W]. Channel t = 3*u + v refers
// to the cell at offset (u - 1, v - 1) from the pixel's own cell, with
// out-of-grid cells clamped to the border.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "aisp/graph.hpp"
#include "aisp/labels.hpp"

namespace aisp {

struct CellCoord {
  std::size_t y = 0;
  std::size_t x = 0;
  friend bool operator==(const CellCoord&, const CellCoord&) = default;
};

class GridSpec {
 public:
  // Throws ConfigError unless interval >= 2 and it divides both sides.
  static GridSpec create(std::size_t height, std::size_t width, std::size_t interval);

  std::size_t interval() const noexcept { return interval_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t cells_y() const noexcept { return height_ / interval_; }
  std::size_t cells_x() const noexcept { return width_ / interval_; }
  std::size_t cell_count() const noexcept { return cells_y() * cells_x(); }

  CellCoord cell_of(std::size_t y, std::size_t x) const;
  std::array<CellCoord, 9> neighbor_cells(std::size_t y, std::size_t x) const;

  // Flat neighbor cell indices for every cell: table[cell * 9 + t].
  std::vector<std::size_t> neighbor_table() const;

 private:
  GridSpec(std::size_t h, std::size_t w, std::size_t s) : height_(h), width_(w), interval_(s) {}
  std::size_t height_, width_, interval_;
};

/// Added to the soft-assignment mass of every cell before dividing.
inline constexpr double kAggregateGuard = 1e-16;

// Weighted mean of a pixel property over the pixels that list each cell among
// their neighbors. Q: [N,9,H,W], L: [N,C,H,W] -> [N,C,h,w].
Var aggregate_superpixel_property(Var q, Var property, const GridSpec& grid);

// Expected cell property under each pixel's association. Q: [N,9,H,W],
// cells: [N,C,h,w] -> [N,C,H,W].
Var reconstruct_pixel_property(Var q, Var cells, const GridSpec& grid);

// [N, C, H, W] one-hot encoding; C = max num_classes in the batch.
Tensor one_hot_labels(std::span<const LabelMap> labels);

// [N, 2, H, W] pixel (row, col) divided by the grid interval.
Tensor position_property(std::size_t batch, const GridSpec& grid);

struct TaskLoss {
  Var total;     // ce + lambda * position
  Var ce;        // mean cross-entropy of reconstructed label distributions
  Var position;  // mean squared position reconstruction error
};

inline constexpr double kLogFloor = 1e-12;

TaskLoss task_loss(Var q, std::span<const LabelMap> labels, const GridSpec& grid, double lambda);

// Per-pixel argmax over the 9 channels (ties to the lowest channel); ids are
// flat cell indices.
std::vector<SuperpixelSegmentation> hard_assign(const Tensor& q, const GridSpec& grid);

// [N, 9, H, W] map that puts all mass on each pixel's own cell.
Tensor center_one_hot(std::size_t batch, const GridSpec& grid);

// Default fragment size threshold: S*S/16, at least 1.
std::size_t default_min_size(std::size_t interval);

// Splits every id into its 4-connected components, merges components smaller
// than min_size into their largest 4-adjacent neighbor, and relabels in
// row-major first-appearance order.
SuperpixelSegmentation enforce_connectivity(const LabelImage& segmentation, std::size_t min_size);

}  // namespace aisp
