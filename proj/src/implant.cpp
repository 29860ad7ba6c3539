#include "aisp/implant.hpp"

#include "aisp/errors.hpp"
#include "aisp/ops.hpp"

namespace aisp {

std::string variant_name(VariantKind variant) {
  switch (variant) {
    case VariantKind::kStandard: return "standard";
    case VariantKind::kPixelNeighbors: return "pnbor";
    case VariantKind::kCenterPixel: return "cpix";
  }
  return "standard";
}

VariantKind parse_variant(std::string_view name) {
  if (name == "standard") return VariantKind::kStandard;
  if (name == "pnbor") return VariantKind::kPixelNeighbors;
  if (name == "cpix") return VariantKind::kCenterPixel;
  throw ConfigError("unknown implant variant '" + std::string(name) + "'");
}

Var compress_channels(Var superpixel_embedding, const CompressionLayers& layers, double slope) {
  const auto& m = superpixel_embedding.value();
  require_rank(m, 4, "superpixel embedding");
  if (layers.w1.value().rank() != 4 || layers.w1.value().dim(1) != m.dim(1))
    throw ConfigError("compress_channels: first layer expects " +
                      std::to_string(layers.w1.value().dim(1)) + " channels, embedding has " +
                      std::to_string(m.dim(1)));
  if (layers.w2.value().rank() != 4 || layers.w2.value().dim(1) != layers.w1.value().dim(0))
    throw ConfigError("compress_channels: layer widths do not chain");
  const Var hidden = ops::leaky_relu(ops::conv2d(superpixel_embedding, layers.w1, layers.b1), slope);
  return ops::conv2d(hidden, layers.w2, layers.b2);
}

namespace {

kernels::ImplantGeometry implant_geometry(const Tensor& e, const Tensor& m, std::size_t out_channels,
                                          const GridSpec& grid, VariantKind variant) {
  require_rank(e, 4, "pixel embedding");
  require_rank(m, 4, "cell embedding");
  if (e.dim(2) != grid.height() || e.dim(3) != grid.width())
    throw DimensionError("pixel embedding " + shape_str(e.shape()) + " does not match the grid");
  if (m.dim(0) != e.dim(0) || m.dim(1) != e.dim(1) || m.dim(2) != grid.cells_y() ||
      m.dim(3) != grid.cells_x())
    throw DimensionError("cell embedding " + shape_str(m.shape()) +
                         " does not match pixel embedding " + shape_str(e.shape()));
  return {e.dim(0), e.dim(1), e.dim(2), e.dim(3), grid.interval(), out_channels, variant};
}

}  // namespace

Tensor implant_windows(const Tensor& pixel_embedding, const Tensor& cell_embedding,
                       const GridSpec& grid, VariantKind variant) {
  const auto geo = implant_geometry(pixel_embedding, cell_embedding, 1, grid, variant);
  const std::size_t N = geo.batch, D = geo.channels, H = geo.height, W = geo.width;
  const std::size_t ch = grid.cells_y(), cw = grid.cells_x();
  Tensor out(Shape{N, H, W, 9, D}, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const auto cells = grid.neighbor_cells(y, x);
        for (int t = 0; t < 9; ++t) {
          const int u = t / 3, v = t % 3;
          for (std::size_t d = 0; d < D; ++d) {
            double val = 0.0;
            if (!(t == 4 && variant == VariantKind::kCenterPixel))
              val += cell_embedding[((n * D + d) * ch + cells[t].y) * cw + cells[t].x];
            if (variant == VariantKind::kPixelNeighbors)
              val += pixel_embedding.at(n, d, kernels::clamp_index(y, u - 1, H),
                                        kernels::clamp_index(x, v - 1, W));
            else if (t == 4)
              val += pixel_embedding.at(n, d, y, x);
            out[(((n * H + y) * W + x) * 9 + t) * D + d] = val;
          }
        }
      }
  return out;
}

Var implant_fuse(Var pixel_embedding, Var cell_embedding, Var weight, Var bias,
                 const GridSpec& grid, VariantKind variant) {
  const Tensor& wv = weight.value();
  require_rank(wv, 4, "implant fuse weight");
  if (wv.dim(2) != 3 || wv.dim(3) != 3) throw DimensionError("implant fuse kernel must be 3x3");
  if (wv.dim(1) != pixel_embedding.value().dim(1))
    throw DimensionError("implant fuse weight expects " + std::to_string(wv.dim(1)) +
                         " channels, embedding has " +
                         std::to_string(pixel_embedding.value().dim(1)));
  if (bias.value().rank() != 1 || bias.value().dim(0) != wv.dim(0))
    throw DimensionError("implant fuse bias size mismatch");
  const auto geo =
      implant_geometry(pixel_embedding.value(), cell_embedding.value(), wv.dim(0), grid, variant);

  Tensor y(Shape{geo.batch, geo.out_channels, geo.height, geo.width});
  kernels::implant_fuse_forward(geo, pixel_embedding.value().data(), cell_embedding.value().data(),
                                wv.data(), bias.value().data(), y.data());
  Graph& g = *pixel_embedding.graph;
  return g.record(std::move(y), {pixel_embedding, cell_embedding, weight, bias},
                  [=](Graph& gr, const Tensor& gy) {
                    auto grad_or_empty = [&gr](Var v) {
                      return gr.requires_grad(v) ? gr.grad_accumulator(v).data() : std::span<double>{};
                    };
                    kernels::implant_fuse_backward(
                        geo, gy.data(), gr.value(pixel_embedding).data(),
                        gr.value(cell_embedding).data(), gr.value(weight).data(),
                        grad_or_empty(pixel_embedding), grad_or_empty(cell_embedding),
                        grad_or_empty(weight), grad_or_empty(bias));
                  });
}

}  // namespace aisp
