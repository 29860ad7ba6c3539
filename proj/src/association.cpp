#include "aisp/association.hpp"

#include <algorithm>
#include <memory>
#include <string>

#include "aisp/errors.hpp"
#include "aisp/kernels.hpp"
#include "aisp/ops.hpp"

namespace aisp {

GridSpec GridSpec::create(std::size_t height, std::size_t width, std::size_t interval) {
  if (interval < 2) throw ConfigError("sampling interval must be at least 2");
  if (height == 0 || width == 0 || height % interval != 0 || width % interval != 0)
    throw ConfigError("image size " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by interval " + std::to_string(interval));
  return GridSpec(height, width, interval);
}

CellCoord GridSpec::cell_of(std::size_t y, std::size_t x) const {
  if (y >= height_ || x >= width_)
    throw IndexError("pixel (" + std::to_string(y) + "," + std::to_string(x) +
                     ") outside the image");
  return {y / interval_, x / interval_};
}

std::array<CellCoord, 9> GridSpec::neighbor_cells(std::size_t y, std::size_t x) const {
  const CellCoord own = cell_of(y, x);
  std::array<CellCoord, 9> out;
  for (int u = 0; u < 3; ++u)
    for (int v = 0; v < 3; ++v)
      out[u * 3 + v] = {kernels::clamp_index(own.y, u - 1, cells_y()),
                        kernels::clamp_index(own.x, v - 1, cells_x())};
  return out;
}

std::vector<std::size_t> GridSpec::neighbor_table() const {
  const auto ch = cells_y(), cw = cells_x();
  std::vector<std::size_t> table(ch * cw * 9);
  for (std::size_t cy = 0; cy < ch; ++cy)
    for (std::size_t cx = 0; cx < cw; ++cx)
      for (int u = 0; u < 3; ++u)
        for (int v = 0; v < 3; ++v)
          table[(cy * cw + cx) * 9 + u * 3 + v] =
              kernels::clamp_index(cy, u - 1, ch) * cw + kernels::clamp_index(cx, v - 1, cw);
  return table;
}

namespace {

void check_association(const Tensor& q, const GridSpec& grid) {
  require_rank(q, 4, "association map");
  if (q.dim(1) != 9 || q.dim(2) != grid.height() || q.dim(3) != grid.width())
    throw DimensionError("association map " + shape_str(q.shape()) + " does not fit a " +
                         std::to_string(grid.height()) + "x" + std::to_string(grid.width()) +
                         " grid");
}

// Flat owner cell of every pixel.
std::vector<std::size_t> owner_table(const GridSpec& grid) {
  std::vector<std::size_t> owner(grid.height() * grid.width());
  for (std::size_t y = 0; y < grid.height(); ++y)
    for (std::size_t x = 0; x < grid.width(); ++x)
      owner[y * grid.width() + x] = (y / grid.interval()) * grid.cells_x() + x / grid.interval();
  return owner;
}

struct GridTables {
  std::vector<std::size_t> neighbors;
  std::vector<std::size_t> owner;
};

std::shared_ptr<const GridTables> make_tables(const GridSpec& grid) {
  return std::make_shared<const GridTables>(GridTables{grid.neighbor_table(), owner_table(grid)});
}

}  // namespace

Var aggregate_superpixel_property(Var q, Var property, const GridSpec& grid) {
  const Tensor& qv = q.value();
  const Tensor& lv = property.value();
  check_association(qv, grid);
  require_rank(lv, 4, "pixel property");
  if (lv.dim(0) != qv.dim(0) || lv.dim(2) != qv.dim(2) || lv.dim(3) != qv.dim(3))
    throw DimensionError("pixel property " + shape_str(lv.shape()) +
                         " does not match association map " + shape_str(qv.shape()));

  const std::size_t N = qv.dim(0), C = lv.dim(1), P = grid.height() * grid.width();
  const std::size_t cells = grid.cell_count();
  auto tables = make_tables(grid);
  auto denom = std::make_shared<std::vector<double>>(N * cells, 0.0);
  Tensor num(Shape{N, C, grid.cells_y(), grid.cells_x()}, 0.0);
  auto qs = qv.data();
  auto ls = lv.data();
  auto ns = num.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t* nb = &tables->neighbors[tables->owner[p] * 9];
      for (std::size_t k = 0; k < 9; ++k) {
        const double w = qs[(n * 9 + k) * P + p];
        (*denom)[n * cells + nb[k]] += w;
        for (std::size_t c = 0; c < C; ++c) ns[(n * C + c) * cells + nb[k]] += ls[(n * C + c) * P + p] * w;
      }
    }
  for (auto& d : *denom) d += kAggregateGuard;
  Tensor out(num.shape());
  auto os = out.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < cells; ++s)
        os[(n * C + c) * cells + s] = ns[(n * C + c) * cells + s] / (*denom)[n * cells + s];

  const Var self{q.graph, q.graph->size()};
  return q.graph->record(
      std::move(out), {q, property},
      [q, property, self, tables, denom, N, C, P, cells](Graph& g, const Tensor& gy) {
        auto hs = g.value(self).data();
        auto gs = gy.data();
        // d/d(numerator) and d/d(denominator) per cell.
        std::vector<double> gnum(N * C * cells), gden(N * cells, 0.0);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t s = 0; s < cells; ++s) {
              const std::size_t i = (n * C + c) * cells + s;
              const double d = (*denom)[n * cells + s];
              gnum[i] = gs[i] / d;
              gden[n * cells + s] -= gs[i] * hs[i] / d;
            }
        const bool need_q = g.requires_grad(q), need_l = g.requires_grad(property);
        auto qs = g.value(q).data();
        auto ls = g.value(property).data();
        std::span<double> gq = need_q ? g.grad_accumulator(q).data() : std::span<double>{};
        std::span<double> gl = need_l ? g.grad_accumulator(property).data() : std::span<double>{};
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t p = 0; p < P; ++p) {
            const std::size_t* nb = &tables->neighbors[tables->owner[p] * 9];
            for (std::size_t k = 0; k < 9; ++k) {
              const std::size_t s = nb[k];
              const double w = qs[(n * 9 + k) * P + p];
              double acc = gden[n * cells + s];
              for (std::size_t c = 0; c < C; ++c) {
                const double gn = gnum[(n * C + c) * cells + s];
                acc += ls[(n * C + c) * P + p] * gn;
                if (need_l) gl[(n * C + c) * P + p] += w * gn;
              }
              if (need_q) gq[(n * 9 + k) * P + p] += acc;
            }
          }
      });
}

Var reconstruct_pixel_property(Var q, Var cells_var, const GridSpec& grid) {
  const Tensor& qv = q.value();
  const Tensor& hv = cells_var.value();
  check_association(qv, grid);
  require_rank(hv, 4, "cell property");
  if (hv.dim(0) != qv.dim(0) || hv.dim(2) != grid.cells_y() || hv.dim(3) != grid.cells_x())
    throw DimensionError("cell property " + shape_str(hv.shape()) + " does not match the grid");

  const std::size_t N = qv.dim(0), C = hv.dim(1), P = grid.height() * grid.width();
  const std::size_t cells = grid.cell_count();
  auto tables = make_tables(grid);
  Tensor out(Shape{N, C, grid.height(), grid.width()}, 0.0);
  auto qs = qv.data();
  auto hs = hv.data();
  auto os = out.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t* nb = &tables->neighbors[tables->owner[p] * 9];
        double acc = 0.0;
        for (std::size_t k = 0; k < 9; ++k)
          acc += hs[(n * C + c) * cells + nb[k]] * qs[(n * 9 + k) * P + p];
        os[(n * C + c) * P + p] = acc;
      }

  return q.graph->record(
      std::move(out), {q, cells_var},
      [q, cells_var, tables, N, C, P, cells](Graph& g, const Tensor& gy) {
        const bool need_q = g.requires_grad(q), need_h = g.requires_grad(cells_var);
        auto qs = g.value(q).data();
        auto hs = g.value(cells_var).data();
        auto gs = gy.data();
        std::span<double> gq = need_q ? g.grad_accumulator(q).data() : std::span<double>{};
        std::span<double> gh = need_h ? g.grad_accumulator(cells_var).data() : std::span<double>{};
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t p = 0; p < P; ++p) {
            const std::size_t* nb = &tables->neighbors[tables->owner[p] * 9];
            for (std::size_t k = 0; k < 9; ++k) {
              double acc = 0.0;
              const double w = qs[(n * 9 + k) * P + p];
              for (std::size_t c = 0; c < C; ++c) {
                const double gv = gs[(n * C + c) * P + p];
                acc += gv * hs[(n * C + c) * cells + nb[k]];
                if (need_h) gh[(n * C + c) * cells + nb[k]] += gv * w;
              }
              if (need_q) gq[(n * 9 + k) * P + p] += acc;
            }
          }
      });
}

Tensor one_hot_labels(std::span<const LabelMap> labels) {
  if (labels.empty()) throw DimensionError("one_hot_labels: empty batch");
  std::int32_t classes = 0;
  for (const auto& l : labels) {
    l.validate();
    if (l.height != labels[0].height || l.width != labels[0].width)
      throw DimensionError("one_hot_labels: label maps differ in size");
    classes = std::max(classes, l.num_classes);
  }
  const std::size_t N = labels.size(), C = static_cast<std::size_t>(classes);
  const std::size_t P = labels[0].height * labels[0].width;
  Tensor out(Shape{N, C, labels[0].height, labels[0].width}, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < P; ++p)
      out[(n * C + static_cast<std::size_t>(labels[n].ids[p])) * P + p] = 1.0;
  return out;
}

Tensor position_property(std::size_t batch, const GridSpec& grid) {
  const std::size_t H = grid.height(), W = grid.width();
  const double s = static_cast<double>(grid.interval());
  Tensor out(Shape{batch, 2, H, W});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        out.at(n, 0, y, x) = static_cast<double>(y) / s;
        out.at(n, 1, y, x) = static_cast<double>(x) / s;
      }
  return out;
}

TaskLoss task_loss(Var q, std::span<const LabelMap> labels, const GridSpec& grid, double lambda) {
  if (lambda < 0.0) throw ConfigError("task_loss: lambda must be non-negative");
  Graph& g = *q.graph;
  const std::size_t N = q.value().dim(0);
  if (labels.size() != N) throw DimensionError("task_loss: label count differs from batch size");
  const double pixels = static_cast<double>(N * grid.height() * grid.width());

  const Var onehot = g.constant(one_hot_labels(labels));
  const Var rec_labels =
      reconstruct_pixel_property(q, aggregate_superpixel_property(q, onehot, grid), grid);
  const Var ce = ops::scale(ops::sum(ops::mul(onehot, ops::log_clamped(rec_labels, kLogFloor))),
                            -1.0 / pixels);

  const Var pos = g.constant(position_property(N, grid));
  const Var rec_pos = reconstruct_pixel_property(q, aggregate_superpixel_property(q, pos, grid), grid);
  const Var diff = ops::sub(rec_pos, pos);
  const Var position = ops::scale(ops::sum(ops::mul(diff, diff)), 1.0 / pixels);

  const Var total = lambda == 0.0 ? ops::scale(ce, 1.0) : ops::add(ce, ops::scale(position, lambda));
  return {total, ce, position};
}

std::vector<SuperpixelSegmentation> hard_assign(const Tensor& q, const GridSpec& grid) {
  check_association(q, grid);
  const std::size_t N = q.dim(0), H = grid.height(), W = grid.width(), P = H * W;
  const auto table = grid.neighbor_table();
  const auto owner = owner_table(grid);
  std::vector<SuperpixelSegmentation> out;
  for (std::size_t n = 0; n < N; ++n) {
    SuperpixelSegmentation seg(H, W);
    for (std::size_t p = 0; p < P; ++p) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 9; ++k)
        if (q[(n * 9 + k) * P + p] > q[(n * 9 + best) * P + p]) best = k;
      seg.ids[p] = static_cast<std::int32_t>(table[owner[p] * 9 + best]);
    }
    seg.count = distinct_ids(seg);
    out.push_back(std::move(seg));
  }
  return out;
}

Tensor center_one_hot(std::size_t batch, const GridSpec& grid) {
  const std::size_t P = grid.height() * grid.width();
  Tensor q(Shape{batch, 9, grid.height(), grid.width()}, 0.0);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t p = 0; p < P; ++p) q[(n * 9 + 4) * P + p] = 1.0;
  return q;
}

std::size_t default_min_size(std::size_t interval) {
  return std::max<std::size_t>(1, interval * interval / 16);
}

}  // namespace aisp
