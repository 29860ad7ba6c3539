#include <algorithm>
#include <array>
#include <vector>

#include "aisp/kernels.hpp"

namespace aisp::kernels::reference {

namespace {

// Input coordinate for output index `o`, tap `t`; false when it falls in padding.
bool tap(std::size_t o, std::size_t t, std::size_t stride, std::size_t pad, std::size_t n,
         std::size_t& out) {
  const long v = static_cast<long>(o * stride + t) - static_cast<long>(pad);
  if (v < 0 || v >= static_cast<long>(n)) return false;
  out = static_cast<std::size_t>(v);
  return true;
}

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
  const auto oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.out_channels; ++f)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b.empty() ? 0.0 : b[f];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v) {
                std::size_t yy, xx;
                if (!tap(i, u, g.stride, g.pad, g.height, yy) ||
                    !tap(j, v, g.stride, g.pad, g.width, xx))
                  continue;
                acc += x[((n * g.in_channels + c) * g.height + yy) * g.width + xx] *
                       w[((f * g.in_channels + c) * k + u) * k + v];
              }
          y[((n * g.out_channels + f) * oh + i) * ow + j] = acc;
        }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  const auto oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.out_channels; ++f)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const double gy = dy[((n * g.out_channels + f) * oh + i) * ow + j];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v) {
                std::size_t yy, xx;
                if (!tap(i, u, g.stride, g.pad, g.height, yy) ||
                    !tap(j, v, g.stride, g.pad, g.width, xx))
                  continue;
                dx[((n * g.in_channels + c) * g.height + yy) * g.width + xx] +=
                    gy * w[((f * g.in_channels + c) * k + u) * k + v];
              }
        }
}

void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> db) {
  const auto oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.out_channels; ++f)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const double gy = dy[((n * g.out_channels + f) * oh + i) * ow + j];
          if (!db.empty()) db[f] += gy;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v) {
                std::size_t yy, xx;
                if (!tap(i, u, g.stride, g.pad, g.height, yy) ||
                    !tap(j, v, g.stride, g.pad, g.width, xx))
                  continue;
                dw[((f * g.in_channels + c) * k + u) * k + v] +=
                    gy * x[((n * g.in_channels + c) * g.height + yy) * g.width + xx];
              }
        }
}

void upsample2_forward(const Upsample2Geometry& g, std::span<const double> x,
                       std::span<const double> w, std::span<const double> b, std::span<double> y) {
  const auto oh = 2 * g.height, ow = 2 * g.width;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.out_channels; ++f)
      for (std::size_t yy = 0; yy < oh; ++yy)
        for (std::size_t xx = 0; xx < ow; ++xx)
          y[((n * g.out_channels + f) * oh + yy) * ow + xx] = b.empty() ? 0.0 : b[f];
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t i = 0; i < g.height; ++i)
        for (std::size_t j = 0; j < g.width; ++j) {
          const double xv = x[((n * g.in_channels + c) * g.height + i) * g.width + j];
          for (std::size_t f = 0; f < g.out_channels; ++f)
            for (std::size_t u = 0; u < 2; ++u)
              for (std::size_t v = 0; v < 2; ++v)
                y[((n * g.out_channels + f) * oh + 2 * i + u) * ow + 2 * j + v] +=
                    xv * w[((c * g.out_channels + f) * 2 + u) * 2 + v];
        }
}

void upsample2_backward_input(const Upsample2Geometry& g, std::span<const double> dy,
                              std::span<const double> w, std::span<double> dx) {
  const auto oh = 2 * g.height, ow = 2 * g.width;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t i = 0; i < g.height; ++i)
        for (std::size_t j = 0; j < g.width; ++j) {
          double acc = 0.0;
          for (std::size_t f = 0; f < g.out_channels; ++f)
            for (std::size_t u = 0; u < 2; ++u)
              for (std::size_t v = 0; v < 2; ++v)
                acc += dy[((n * g.out_channels + f) * oh + 2 * i + u) * ow + 2 * j + v] *
                       w[((c * g.out_channels + f) * 2 + u) * 2 + v];
          dx[((n * g.in_channels + c) * g.height + i) * g.width + j] += acc;
        }
}

void upsample2_backward_params(const Upsample2Geometry& g, std::span<const double> dy,
                               std::span<const double> x, std::span<double> dw,
                               std::span<double> db) {
  const auto oh = 2 * g.height, ow = 2 * g.width;
  if (!db.empty())
    for (std::size_t n = 0; n < g.batch; ++n)
      for (std::size_t f = 0; f < g.out_channels; ++f)
        for (std::size_t p = 0; p < oh * ow; ++p) db[f] += dy[(n * g.out_channels + f) * oh * ow + p];
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t i = 0; i < g.height; ++i)
        for (std::size_t j = 0; j < g.width; ++j) {
          const double xv = x[((n * g.in_channels + c) * g.height + i) * g.width + j];
          for (std::size_t f = 0; f < g.out_channels; ++f)
            for (std::size_t u = 0; u < 2; ++u)
              for (std::size_t v = 0; v < 2; ++v)
                dw[((c * g.out_channels + f) * 2 + u) * 2 + v] +=
                    xv * dy[((n * g.out_channels + f) * oh + 2 * i + u) * ow + 2 * j + v];
        }
}

void max_pool2_forward(std::size_t planes, std::size_t height, std::size_t width,
                       std::span<const double> x, std::span<double> y,
                       std::span<std::uint32_t> argmax) {
  const auto oh = height / 2, ow = width / 2;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (p * height + 2 * i) * width + 2 * j;
        for (std::size_t u = 0; u < 2; ++u)
          for (std::size_t v = 0; v < 2; ++v) {
            const std::size_t idx = (p * height + 2 * i + u) * width + 2 * j + v;
            if (x[idx] > x[best]) best = idx;
          }
        y[(p * oh + i) * ow + j] = x[best];
        argmax[(p * oh + i) * ow + j] = static_cast<std::uint32_t>(best);
      }
}

void max_pool2_backward(std::size_t planes, std::size_t height, std::size_t width,
                        std::span<const double> dy, std::span<const std::uint32_t> argmax,
                        std::span<double> dx) {
  const auto count = planes * (height / 2) * (width / 2);
  for (std::size_t o = 0; o < count; ++o) dx[argmax[o]] += dy[o];
}

namespace {

// window[(u * 3 + v) * D + d] for pixel (y, x) of image n.
void gather_window(const ImplantGeometry& g, std::span<const double> e, std::span<const double> m,
                   std::size_t n, std::size_t y, std::size_t x, std::vector<double>& window) {
  const auto D = g.channels, H = g.height, W = g.width;
  const auto ch = g.cells_y(), cw = g.cells_x();
  const auto cy = y / g.interval, cx = x / g.interval;
  window.assign(9 * D, 0.0);
  for (int u = 0; u < 3; ++u)
    for (int v = 0; v < 3; ++v) {
      const bool center = (u == 1 && v == 1);
      const auto ny = clamp_index(cy, u - 1, ch), nx = clamp_index(cx, v - 1, cw);
      for (std::size_t d = 0; d < D; ++d) {
        double val = 0.0;
        if (!(center && g.variant == ImplantVariant::kCenterPixel))
          val += m[((n * D + d) * ch + ny) * cw + nx];
        if (g.variant == ImplantVariant::kPixelNeighbors) {
          const auto py = clamp_index(y, u - 1, H), px = clamp_index(x, v - 1, W);
          val += e[((n * D + d) * H + py) * W + px];
        } else if (center) {
          val += e[((n * D + d) * H + y) * W + x];
        }
        window[(u * 3 + v) * D + d] = val;
      }
    }
}

}  // namespace

void implant_fuse_forward(const ImplantGeometry& g, std::span<const double> e,
                          std::span<const double> m, std::span<const double> w,
                          std::span<const double> b, std::span<double> y) {
  const auto D = g.channels, F = g.out_channels, H = g.height, W = g.width;
  std::vector<double> window;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t py = 0; py < H; ++py)
      for (std::size_t px = 0; px < W; ++px) {
        gather_window(g, e, m, n, py, px, window);
        for (std::size_t f = 0; f < F; ++f) {
          double acc = b.empty() ? 0.0 : b[f];
          for (std::size_t t = 0; t < 9; ++t)
            for (std::size_t d = 0; d < D; ++d) acc += window[t * D + d] * w[(f * D + d) * 9 + t];
          y[((n * F + f) * H + py) * W + px] = acc;
        }
      }
}

void implant_fuse_backward(const ImplantGeometry& g, std::span<const double> dy,
                           std::span<const double> e, std::span<const double> m,
                           std::span<const double> w, std::span<double> de,
                           std::span<double> dm, std::span<double> dw, std::span<double> db) {
  const auto D = g.channels, F = g.out_channels, H = g.height, W = g.width;
  const auto ch = g.cells_y(), cw = g.cells_x();
  std::vector<double> window, dwindow(9 * D);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t py = 0; py < H; ++py)
      for (std::size_t px = 0; px < W; ++px) {
        gather_window(g, e, m, n, py, px, window);
        std::fill(dwindow.begin(), dwindow.end(), 0.0);
        for (std::size_t f = 0; f < F; ++f) {
          const double gy = dy[((n * F + f) * H + py) * W + px];
          if (!db.empty()) db[f] += gy;
          for (std::size_t t = 0; t < 9; ++t)
            for (std::size_t d = 0; d < D; ++d) {
              if (!dw.empty()) dw[(f * D + d) * 9 + t] += gy * window[t * D + d];
              dwindow[t * D + d] += gy * w[(f * D + d) * 9 + t];
            }
        }
        // Scatter window gradients back to the tensors each entry was built from.
        const auto cy = py / g.interval, cx = px / g.interval;
        for (int u = 0; u < 3; ++u)
          for (int v = 0; v < 3; ++v) {
            const bool center = (u == 1 && v == 1);
            const auto ny = clamp_index(cy, u - 1, ch), nx = clamp_index(cx, v - 1, cw);
            for (std::size_t d = 0; d < D; ++d) {
              const double gw = dwindow[(u * 3 + v) * D + d];
              if (!dm.empty() && !(center && g.variant == ImplantVariant::kCenterPixel))
                dm[((n * D + d) * ch + ny) * cw + nx] += gw;
              if (de.empty()) continue;
              if (g.variant == ImplantVariant::kPixelNeighbors) {
                const auto qy = clamp_index(py, u - 1, H), qx = clamp_index(px, v - 1, W);
                de[((n * D + d) * H + qy) * W + qx] += gw;
              } else if (center) {
                de[((n * D + d) * H + py) * W + px] += gw;
              }
            }
          }
      }
}

}  // namespace aisp::kernels::reference
