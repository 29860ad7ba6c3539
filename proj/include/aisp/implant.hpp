#pragma once

// Association implantation: each pixel embedding is surrounded by the
// embeddings of its 9 neighbor grid cells and the resulting 3x3 window is
// fused by a learned 3x3 kernel.

#include <string>
#include <string_view>

#include "aisp/association.hpp"
#include "aisp/graph.hpp"
#include "aisp/kernels.hpp"

namespace aisp {

// standard: center = cell + pixel, ring = cells
// pnbor:    every tap = cell + the pixel at the same offset (replicate-clamped)
// cpix:     center = pixel only, ring = cells
using VariantKind = kernels::ImplantVariant;

std::string variant_name(VariantKind variant);
VariantKind parse_variant(std::string_view name);  // throws ConfigError

struct CompressionLayers {
  Var w1, b1, w2, b2;
};

// Two 3x3 convolutions with a leaky rectifier between them:
// [N, C, h, w] -> [N, D, h, w].
Var compress_channels(Var superpixel_embedding, const CompressionLayers& layers, double slope);

// Materialized implant windows, [N, H, W, 9, D], tap t = 3*u + v. Used for
// inspection and tests; training goes through implant_fuse.
Tensor implant_windows(const Tensor& pixel_embedding, const Tensor& cell_embedding,
                       const GridSpec& grid, VariantKind variant);

// Fused implant + 3x3 kernel. pixel_embedding: [N,D,H,W], cell_embedding:
// [N,D,h,w], weight: [F,D,3,3], bias: [F] -> [N,F,H,W].
Var implant_fuse(Var pixel_embedding, Var cell_embedding, Var weight, Var bias,
                 const GridSpec& grid, VariantKind variant);

}  // namespace aisp
