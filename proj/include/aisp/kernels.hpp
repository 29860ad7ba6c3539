#pragma once

// Raw NCHW compute kernels behind the differentiable ops.
//
// Two implementations share each signature:
//   aisp::kernels            OpenMP-parallel, cache-friendly loop orders
//   aisp::kernels::reference plain serial loops, kept for tests and benchmarks
//
// Parallel kernels give every output element to exactly one thread and sum in
// a fixed order, so results do not depend on the thread count. Forward
// kernels overwrite their outputs; backward kernels accumulate.

#include <cstddef>
#include <cstdint>
#include <span>

namespace aisp::kernels {

struct Conv2dGeometry {
  std::size_t batch = 1, in_channels = 1, height = 1, width = 1;
  std::size_t out_channels = 1, kernel = 3, stride = 1, pad = 1;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

// Transposed convolution with kernel 2, stride 2. Weight layout [C, F, 2, 2].
struct Upsample2Geometry {
  std::size_t batch = 1, in_channels = 1, height = 1, width = 1, out_channels = 1;
};

enum class ImplantVariant : std::uint8_t { kStandard = 0, kPixelNeighbors = 1, kCenterPixel = 2 };

// Association implantation followed by the 3x3 fusion kernel.
// E: [N, D, H, W], M: [N, D, H/S, W/S], weight: [F, D, 3, 3], out: [N, F, H, W].
struct ImplantGeometry {
  std::size_t batch = 1, channels = 1, height = 1, width = 1, interval = 1, out_channels = 1;
  ImplantVariant variant = ImplantVariant::kStandard;

  std::size_t cells_y() const { return height / interval; }
  std::size_t cells_x() const { return width / interval; }
};

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw, std::span<double> db);

void upsample2_forward(const Upsample2Geometry& g, std::span<const double> x,
                       std::span<const double> w, std::span<const double> b, std::span<double> y);
void upsample2_backward_input(const Upsample2Geometry& g, std::span<const double> dy,
                              std::span<const double> w, std::span<double> dx);
void upsample2_backward_params(const Upsample2Geometry& g, std::span<const double> dy,
                               std::span<const double> x, std::span<double> dw,
                               std::span<double> db);

// `planes` independent H x W planes. argmax holds the flat input index chosen
// for each output; ties go to the first element in row-major order.
void max_pool2_forward(std::size_t planes, std::size_t height, std::size_t width,
                       std::span<const double> x, std::span<double> y,
                       std::span<std::uint32_t> argmax);
void max_pool2_backward(std::size_t planes, std::size_t height, std::size_t width,
                        std::span<const double> dy, std::span<const std::uint32_t> argmax,
                        std::span<double> dx);

void implant_fuse_forward(const ImplantGeometry& g, std::span<const double> e,
                          std::span<const double> m, std::span<const double> w,
                          std::span<const double> b, std::span<double> y);
void implant_fuse_backward(const ImplantGeometry& g, std::span<const double> dy,
                           std::span<const double> e, std::span<const double> m,
                           std::span<const double> w, std::span<double> de,
                           std::span<double> dm, std::span<double> dw, std::span<double> db);

namespace reference {

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw, std::span<double> db);

void upsample2_forward(const Upsample2Geometry& g, std::span<const double> x,
                       std::span<const double> w, std::span<const double> b, std::span<double> y);
void upsample2_backward_input(const Upsample2Geometry& g, std::span<const double> dy,
                              std::span<const double> w, std::span<double> dx);
void upsample2_backward_params(const Upsample2Geometry& g, std::span<const double> dy,
                               std::span<const double> x, std::span<double> dw,
                               std::span<double> db);

void max_pool2_forward(std::size_t planes, std::size_t height, std::size_t width,
                       std::span<const double> x, std::span<double> y,
                       std::span<std::uint32_t> argmax);
void max_pool2_backward(std::size_t planes, std::size_t height, std::size_t width,
                        std::span<const double> dy, std::span<const std::uint32_t> argmax,
                        std::span<double> dx);

// Materializes every 3x3xD implant window before the dot product.
void implant_fuse_forward(const ImplantGeometry& g, std::span<const double> e,
                          std::span<const double> m, std::span<const double> w,
                          std::span<const double> b, std::span<double> y);
void implant_fuse_backward(const ImplantGeometry& g, std::span<const double> dy,
                           std::span<const double> e, std::span<const double> m,
                           std::span<const double> w, std::span<double> de,
                           std::span<double> dm, std::span<double> dw, std::span<double> db);

}  // namespace reference

// Replicate-clamped index of `i + offset` into [0, n).
inline std::size_t clamp_index(std::size_t i, int offset, std::size_t n) {
  const long v = static_cast<long>(i) + offset;
  if (v < 0) return 0;
  if (v >= static_cast<long>(n)) return n - 1;
  return static_cast<std::size_t>(v);
}

}  // namespace aisp::kernels
