#include <algorithm>
#include <vector>

#include "aisp/kernels.hpp"

namespace aisp::kernels {

namespace {

using index_t = long;

// Output range [lo, hi) whose tap at offset `t - pad` stays inside [0, n).
inline void valid_range(index_t out, index_t t, index_t pad, index_t n, index_t& lo, index_t& hi) {
  lo = std::max<index_t>(0, pad - t);
  hi = std::min<index_t>(out, n + pad - t);
}

void conv2d_forward_strided(const Conv2dGeometry& g, std::span<const double> x,
                            std::span<const double> w, std::span<const double> b,
                            std::span<double> y) {
  const index_t N = g.batch, C = g.in_channels, H = g.height, W = g.width, F = g.out_channels;
  const index_t K = g.kernel, st = g.stride, pad = g.pad;
  const index_t OH = g.out_height(), OW = g.out_width();
#pragma omp parallel for collapse(2) schedule(static)
  for (index_t n = 0; n < N; ++n)
    for (index_t f = 0; f < F; ++f)
      for (index_t i = 0; i < OH; ++i)
        for (index_t j = 0; j < OW; ++j) {
          double acc = b.empty() ? 0.0 : b[f];
          for (index_t c = 0; c < C; ++c)
            for (index_t u = 0; u < K; ++u) {
              const index_t yy = i * st + u - pad;
              if (yy < 0 || yy >= H) continue;
              for (index_t v = 0; v < K; ++v) {
                const index_t xx = j * st + v - pad;
                if (xx < 0 || xx >= W) continue;
                acc += x[((n * C + c) * H + yy) * W + xx] * w[((f * C + c) * K + u) * K + v];
              }
            }
          y[((n * F + f) * OH + i) * OW + j] = acc;
        }
}

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
  if (g.stride != 1) {
    conv2d_forward_strided(g, x, w, b, y);
    return;
  }
  const index_t N = g.batch, C = g.in_channels, H = g.height, W = g.width, F = g.out_channels;
  const index_t K = g.kernel, pad = g.pad;
  const index_t OH = g.out_height(), OW = g.out_width();
  const double* xd = x.data();
  const double* wd = w.data();
  double* yd = y.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (index_t n = 0; n < N; ++n)
    for (index_t f = 0; f < F; ++f) {
      double* yp = yd + (n * F + f) * OH * OW;
      std::fill(yp, yp + OH * OW, b.empty() ? 0.0 : b[f]);
      for (index_t c = 0; c < C; ++c) {
        const double* xp = xd + (n * C + c) * H * W;
        const double* wp = wd + (f * C + c) * K * K;
        for (index_t u = 0; u < K; ++u) {
          index_t ilo, ihi;
          valid_range(OH, u, pad, H, ilo, ihi);
          for (index_t v = 0; v < K; ++v) {
            index_t jlo, jhi;
            valid_range(OW, v, pad, W, jlo, jhi);
            const double wv = wp[u * K + v];
            const index_t shift = v - pad;
            for (index_t i = ilo; i < ihi; ++i) {
              const double* xr = xp + (i + u - pad) * W;
              double* yr = yp + i * OW;
#pragma omp simd
              for (index_t j = jlo; j < jhi; ++j) yr[j] += wv * xr[j + shift];
            }
          }
        }
      }
    }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  const index_t N = g.batch, C = g.in_channels, H = g.height, W = g.width, F = g.out_channels;
  const index_t K = g.kernel, st = g.stride, pad = g.pad;
  const index_t OH = g.out_height(), OW = g.out_width();
  const double* dyd = dy.data();
  const double* wd = w.data();
  double* dxd = dx.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (index_t n = 0; n < N; ++n)
    for (index_t c = 0; c < C; ++c) {
      double* dxp = dxd + (n * C + c) * H * W;
      for (index_t f = 0; f < F; ++f) {
        const double* dyp = dyd + (n * F + f) * OH * OW;
        const double* wp = wd + (f * C + c) * K * K;
        for (index_t u = 0; u < K; ++u)
          for (index_t v = 0; v < K; ++v) {
            const double wv = wp[u * K + v];
            if (st == 1) {
              index_t ilo, ihi, jlo, jhi;
              valid_range(OH, u, pad, H, ilo, ihi);
              valid_range(OW, v, pad, W, jlo, jhi);
              const index_t shift = v - pad;
              for (index_t i = ilo; i < ihi; ++i) {
                double* dr = dxp + (i + u - pad) * W;
                const double* gr = dyp + i * OW;
#pragma omp simd
                for (index_t j = jlo; j < jhi; ++j) dr[j + shift] += wv * gr[j];
              }
            } else {
              for (index_t i = 0; i < OH; ++i) {
                const index_t yy = i * st + u - pad;
                if (yy < 0 || yy >= H) continue;
                for (index_t j = 0; j < OW; ++j) {
                  const index_t xx = j * st + v - pad;
                  if (xx < 0 || xx >= W) continue;
                  dxp[yy * W + xx] += wv * dyp[i * OW + j];
                }
              }
            }
          }
      }
    }
}

void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> db) {
  const index_t N = g.batch, C = g.in_channels, H = g.height, W = g.width, F = g.out_channels;
  const index_t K = g.kernel, st = g.stride, pad = g.pad;
  const index_t OH = g.out_height(), OW = g.out_width();
  const double* dyd = dy.data();
  const double* xd = x.data();
#pragma omp parallel for schedule(static)
  for (index_t f = 0; f < F; ++f) {
    if (!db.empty()) {
      double acc = 0.0;
      for (index_t n = 0; n < N; ++n) {
        const double* dyp = dyd + (n * F + f) * OH * OW;
#pragma omp simd reduction(+ : acc)
        for (index_t p = 0; p < OH * OW; ++p) acc += dyp[p];
      }
      db[f] += acc;
    }
    for (index_t c = 0; c < C; ++c)
      for (index_t u = 0; u < K; ++u)
        for (index_t v = 0; v < K; ++v) {
          double acc = 0.0;
          for (index_t n = 0; n < N; ++n) {
            const double* dyp = dyd + (n * F + f) * OH * OW;
            const double* xp = xd + (n * C + c) * H * W;
            if (st == 1) {
              index_t ilo, ihi, jlo, jhi;
              valid_range(OH, u, pad, H, ilo, ihi);
              valid_range(OW, v, pad, W, jlo, jhi);
              const index_t shift = v - pad;
              for (index_t i = ilo; i < ihi; ++i) {
                const double* xr = xp + (i + u - pad) * W;
                const double* gr = dyp + i * OW;
#pragma omp simd reduction(+ : acc)
                for (index_t j = jlo; j < jhi; ++j) acc += gr[j] * xr[j + shift];
              }
            } else {
              for (index_t i = 0; i < OH; ++i) {
                const index_t yy = i * st + u - pad;
                if (yy < 0 || yy >= H) continue;
                for (index_t j = 0; j < OW; ++j) {
                  const index_t xx = j * st + v - pad;
                  if (xx < 0 || xx >= W) continue;
                  acc += dyp[i * OW + j] * xp[yy * W + xx];
                }
              }
            }
          }
          dw[((f * C + c) * K + u) * K + v] += acc;
        }
  }
}

void upsample2_forward(const Upsample2Geometry& g, std::span<const double> x,
                       std::span<const double> w, std::span<const double> b, std::span<double> y) {
  const index_t N = g.batch, C = g.in_channels, H = g.height, W = g.width, F = g.out_channels;
  const index_t OW = 2 * W;
#pragma omp parallel for collapse(2) schedule(static)
  for (index_t n = 0; n < N; ++n)
    for (index_t f = 0; f < F; ++f) {
      double* yp = y.data() + (n * F + f) * 4 * H * W;
      std::fill(yp, yp + 4 * H * W, b.empty() ? 0.0 : b[f]);
      for (index_t c = 0; c < C; ++c) {
        const double* xp = x.data() + (n * C + c) * H * W;
        const double* wp = w.data() + (c * F + f) * 4;
        for (index_t i = 0; i < H; ++i)
          for (index_t u = 0; u < 2; ++u) {
            double* yr = yp + (2 * i + u) * OW;
            const double w0 = wp[u * 2], w1 = wp[u * 2 + 1];
            for (index_t j = 0; j < W; ++j) {
              const double xv = xp[i * W + j];
              yr[2 * j] += w0 * xv;
              yr[2 * j + 1] += w1 * xv;
            }
          }
      }
    }
}

void upsample2_backward_input(const Upsample2Geometry& g, std::span<const double> dy,
                              std::span<const double> w, std::span<double> dx) {
  const index_t N = g.batch, C = g.in_channels, H = g.height, W = g.width, F = g.out_channels;
  const index_t OW = 2 * W;
#pragma omp parallel for collapse(2) schedule(static)
  for (index_t n = 0; n < N; ++n)
    for (index_t c = 0; c < C; ++c) {
      double* dxp = dx.data() + (n * C + c) * H * W;
      for (index_t f = 0; f < F; ++f) {
        const double* gp = dy.data() + (n * F + f) * 4 * H * W;
        const double* wp = w.data() + (c * F + f) * 4;
        for (index_t i = 0; i < H; ++i)
          for (index_t u = 0; u < 2; ++u) {
            const double* gr = gp + (2 * i + u) * OW;
            const double w0 = wp[u * 2], w1 = wp[u * 2 + 1];
            for (index_t j = 0; j < W; ++j) dxp[i * W + j] += w0 * gr[2 * j] + w1 * gr[2 * j + 1];
          }
      }
    }
}

void upsample2_backward_params(const Upsample2Geometry& g, std::span<const double> dy,
                               std::span<const double> x, std::span<double> dw,
                               std::span<double> db) {
  const index_t N = g.batch, C = g.in_channels, H = g.height, W = g.width, F = g.out_channels;
  const index_t OW = 2 * W;
  if (!db.empty()) {
#pragma omp parallel for schedule(static)
    for (index_t f = 0; f < F; ++f) {
      double acc = 0.0;
      for (index_t n = 0; n < N; ++n) {
        const double* gp = dy.data() + (n * F + f) * 4 * H * W;
#pragma omp simd reduction(+ : acc)
        for (index_t p = 0; p < 4 * H * W; ++p) acc += gp[p];
      }
      db[f] += acc;
    }
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (index_t c = 0; c < C; ++c)
    for (index_t f = 0; f < F; ++f) {
      double acc[4] = {0.0, 0.0, 0.0, 0.0};
      for (index_t n = 0; n < N; ++n) {
        const double* xp = x.data() + (n * C + c) * H * W;
        const double* gp = dy.data() + (n * F + f) * 4 * H * W;
        for (index_t i = 0; i < H; ++i)
          for (index_t u = 0; u < 2; ++u) {
            const double* gr = gp + (2 * i + u) * OW;
            for (index_t j = 0; j < W; ++j) {
              acc[u * 2] += xp[i * W + j] * gr[2 * j];
              acc[u * 2 + 1] += xp[i * W + j] * gr[2 * j + 1];
            }
          }
      }
      for (index_t t = 0; t < 4; ++t) dw[(c * F + f) * 4 + t] += acc[t];
    }
}

void max_pool2_forward(std::size_t planes, std::size_t height, std::size_t width,
                       std::span<const double> x, std::span<double> y,
                       std::span<std::uint32_t> argmax) {
  const index_t P = planes, H = height, W = width, OH = H / 2, OW = W / 2;
#pragma omp parallel for schedule(static)
  for (index_t p = 0; p < P; ++p)
    for (index_t i = 0; i < OH; ++i)
      for (index_t j = 0; j < OW; ++j) {
        const index_t base = (p * H + 2 * i) * W + 2 * j;
        const index_t cand[4] = {base, base + 1, base + W, base + W + 1};
        index_t best = cand[0];
        for (int t = 1; t < 4; ++t)
          if (x[cand[t]] > x[best]) best = cand[t];
        y[(p * OH + i) * OW + j] = x[best];
        argmax[(p * OH + i) * OW + j] = static_cast<std::uint32_t>(best);
      }
}

void max_pool2_backward(std::size_t planes, std::size_t height, std::size_t width,
                        std::span<const double> dy, std::span<const std::uint32_t> argmax,
                        std::span<double> dx) {
  // Each output's argmax lies inside its own disjoint block, so planes never collide.
  const index_t P = planes, per_plane = (height / 2) * (width / 2);
#pragma omp parallel for schedule(static)
  for (index_t p = 0; p < P; ++p)
    for (index_t o = p * per_plane; o < (p + 1) * per_plane; ++o) dx[argmax[o]] += dy[o];
}

namespace {

struct CellTable {
  // neighbors[cell * 9 + t] = flat index of the t-th neighbor cell (replicate-clamped).
  std::vector<std::size_t> neighbors;
  // owner[pixel] = flat cell index.
  std::vector<std::size_t> owner;
};

CellTable build_cell_table(const ImplantGeometry& g) {
  const auto ch = g.cells_y(), cw = g.cells_x();
  CellTable table;
  table.neighbors.resize(ch * cw * 9);
  for (std::size_t cy = 0; cy < ch; ++cy)
    for (std::size_t cx = 0; cx < cw; ++cx)
      for (int u = 0; u < 3; ++u)
        for (int v = 0; v < 3; ++v)
          table.neighbors[(cy * cw + cx) * 9 + u * 3 + v] =
              clamp_index(cy, u - 1, ch) * cw + clamp_index(cx, v - 1, cw);
  table.owner.resize(g.height * g.width);
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x)
      table.owner[y * g.width + x] = (y / g.interval) * cw + x / g.interval;
  return table;
}

inline bool cell_tap_used(ImplantVariant variant, int t) {
  return !(variant == ImplantVariant::kCenterPixel && t == 4);
}

}  // namespace

void implant_fuse_forward(const ImplantGeometry& g, std::span<const double> e,
                          std::span<const double> m, std::span<const double> w,
                          std::span<const double> b, std::span<double> y) {
  const index_t N = g.batch, D = g.channels, H = g.height, W = g.width, F = g.out_channels;
  const index_t cells = g.cells_y() * g.cells_x();
  const CellTable table = build_cell_table(g);
  const bool pnbor = g.variant == ImplantVariant::kPixelNeighbors;

#pragma omp parallel for collapse(2) schedule(static)
  for (index_t n = 0; n < N; ++n)
    for (index_t f = 0; f < F; ++f) {
      // Superpixel part: identical for every pixel of a cell.
      std::vector<double> cell_term(cells, b.empty() ? 0.0 : b[f]);
      for (index_t s = 0; s < cells; ++s) {
        double acc = 0.0;
        for (index_t d = 0; d < D; ++d) {
          const double* mp = m.data() + (n * D + d) * cells;
          const double* wp = w.data() + (f * D + d) * 9;
          for (int t = 0; t < 9; ++t)
            if (cell_tap_used(g.variant, t)) acc += wp[t] * mp[table.neighbors[s * 9 + t]];
        }
        cell_term[s] += acc;
      }
      double* yp = y.data() + (n * F + f) * H * W;
      for (index_t p = 0; p < H * W; ++p) yp[p] = cell_term[table.owner[p]];

      // Pixel part.
      for (index_t d = 0; d < D; ++d) {
        const double* ep = e.data() + (n * D + d) * H * W;
        const double* wp = w.data() + (f * D + d) * 9;
        if (!pnbor) {
          const double wc = wp[4];
#pragma omp simd
          for (index_t p = 0; p < H * W; ++p) yp[p] += wc * ep[p];
          continue;
        }
        for (int u = 0; u < 3; ++u)
          for (int v = 0; v < 3; ++v) {
            const double wv = wp[u * 3 + v];
            for (index_t yy = 0; yy < H; ++yy) {
              const double* er = ep + clamp_index(yy, u - 1, H) * W;
              double* yr = yp + yy * W;
              yr[0] += wv * er[clamp_index(0, v - 1, W)];
              for (index_t xx = 1; xx + 1 < W; ++xx) yr[xx] += wv * er[xx + v - 1];
              if (W > 1) yr[W - 1] += wv * er[clamp_index(W - 1, v - 1, W)];
            }
          }
      }
    }
}

void implant_fuse_backward(const ImplantGeometry& g, std::span<const double> dy,
                           std::span<const double> e, std::span<const double> m,
                           std::span<const double> w, std::span<double> de,
                           std::span<double> dm, std::span<double> dw, std::span<double> db) {
  const index_t N = g.batch, D = g.channels, H = g.height, W = g.width, F = g.out_channels;
  const index_t cells = g.cells_y() * g.cells_x();
  const CellTable table = build_cell_table(g);
  const bool pnbor = g.variant == ImplantVariant::kPixelNeighbors;

  // Per-cell sums of the output gradient.
  std::vector<double> cell_grad(N * F * cells, 0.0);
#pragma omp parallel for collapse(2) schedule(static)
  for (index_t n = 0; n < N; ++n)
    for (index_t f = 0; f < F; ++f) {
      const double* gp = dy.data() + (n * F + f) * H * W;
      double* cg = cell_grad.data() + (n * F + f) * cells;
      for (index_t p = 0; p < H * W; ++p) cg[table.owner[p]] += gp[p];
    }

  if (!db.empty()) {
    for (index_t f = 0; f < F; ++f) {
      double acc = 0.0;
      for (index_t n = 0; n < N; ++n)
        for (index_t s = 0; s < cells; ++s) acc += cell_grad[(n * F + f) * cells + s];
      db[f] += acc;
    }
  }

  if (!dm.empty()) {
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < N; ++n)
      for (index_t d = 0; d < D; ++d) {
        double* dmp = dm.data() + (n * D + d) * cells;
        for (index_t s = 0; s < cells; ++s)
          for (int t = 0; t < 9; ++t) {
            if (!cell_tap_used(g.variant, t)) continue;
            double acc = 0.0;
            for (index_t f = 0; f < F; ++f)
              acc += w[(f * D + d) * 9 + t] * cell_grad[(n * F + f) * cells + s];
            dmp[table.neighbors[s * 9 + t]] += acc;
          }
      }
  }

  if (!dw.empty()) {
#pragma omp parallel for schedule(static)
    for (index_t f = 0; f < F; ++f)
      for (index_t d = 0; d < D; ++d)
        for (int t = 0; t < 9; ++t) {
          double acc = 0.0;
          if (cell_tap_used(g.variant, t))
            for (index_t n = 0; n < N; ++n) {
              const double* cg = cell_grad.data() + (n * F + f) * cells;
              const double* mp = m.data() + (n * D + d) * cells;
              for (index_t s = 0; s < cells; ++s) acc += cg[s] * mp[table.neighbors[s * 9 + t]];
            }
          if (pnbor || t == 4) {
            const int u = t / 3, v = t % 3;
            for (index_t n = 0; n < N; ++n) {
              const double* gp = dy.data() + (n * F + f) * H * W;
              const double* ep = e.data() + (n * D + d) * H * W;
              if (!pnbor) {
#pragma omp simd reduction(+ : acc)
                for (index_t p = 0; p < H * W; ++p) acc += gp[p] * ep[p];
                continue;
              }
              for (index_t yy = 0; yy < H; ++yy) {
                const double* er = ep + clamp_index(yy, u - 1, H) * W;
                const double* gr = gp + yy * W;
                for (index_t xx = 0; xx < W; ++xx) acc += gr[xx] * er[clamp_index(xx, v - 1, W)];
              }
            }
          }
          dw[(f * D + d) * 9 + t] += acc;
        }
  }

  if (!de.empty()) {
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < N; ++n)
      for (index_t d = 0; d < D; ++d) {
        double* dep = de.data() + (n * D + d) * H * W;
        for (index_t f = 0; f < F; ++f) {
          const double* gp = dy.data() + (n * F + f) * H * W;
          const double* wp = w.data() + (f * D + d) * 9;
          if (!pnbor) {
            const double wc = wp[4];
#pragma omp simd
            for (index_t p = 0; p < H * W; ++p) dep[p] += wc * gp[p];
            continue;
          }
          for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v) {
              const double wv = wp[u * 3 + v];
              for (index_t yy = 0; yy < H; ++yy) {
                double* dr = dep + clamp_index(yy, u - 1, H) * W;
                const double* gr = gp + yy * W;
                for (index_t xx = 0; xx < W; ++xx) dr[clamp_index(xx, v - 1, W)] += wv * gr[xx];
              }
            }
        }
      }
  }
}

}  // namespace aisp::kernels
