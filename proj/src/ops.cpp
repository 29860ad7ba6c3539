#include "aisp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "aisp/errors.hpp"
#include "aisp/kernels.hpp"

namespace aisp::ops {

namespace {

// FNV-1a over a sequence of small branch codes.
template <typename F>
std::uint64_t branch_digest(std::size_t n, F&& code) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < n; ++i) h = (h ^ static_cast<std::uint64_t>(code(i))) * 1099511628211ULL;
  return h;
}

}  // namespace

namespace {

Graph& graph_of(Var v) {
  if (v.graph == nullptr) throw UsageError("Var is not attached to a graph");
  return *v.graph;
}

void require_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw UsageError("operands belong to different graphs");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

void add_into(Tensor& dst, std::span<const double> src, double factor = 1.0) {
  auto d = dst.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * src[i];
}

}  // namespace

Var conv2d(Var x, Var w, std::optional<Var> b, std::size_t stride, std::size_t pad) {
  Graph& g = graph_of(x);
  require_same_graph(x, w);
  if (b) require_same_graph(x, *b);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 4, "conv2d input");
  require_rank(wv, 4, "conv2d weight");
  if (wv.dim(1) != xv.dim(1))
    throw DimensionError("conv2d: weight expects " + std::to_string(wv.dim(1)) +
                         " input channels, got " + std::to_string(xv.dim(1)));
  if (wv.dim(2) != wv.dim(3) || wv.dim(2) % 2 == 0)
    throw ConfigError("conv2d: kernel must be square with odd size");
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  if (b && (b->value().rank() != 1 || b->value().dim(0) != wv.dim(0)))
    throw DimensionError("conv2d: bias must have shape [" + std::to_string(wv.dim(0)) + "]");

  kernels::Conv2dGeometry geo{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3),
                              wv.dim(0), wv.dim(2), stride, pad};
  const std::size_t k = geo.kernel;
  if (geo.height + 2 * pad < k || geo.width + 2 * pad < k ||
      (geo.height + 2 * pad - k) % stride != 0 || (geo.width + 2 * pad - k) % stride != 0)
    throw ConfigError("conv2d: output size is not integral for input " + shape_str(xv.shape()));

  Tensor y(Shape{geo.batch, geo.out_channels, geo.out_height(), geo.out_width()});
  kernels::conv2d_forward(geo, xv.data(), wv.data(),
                          b ? b->value().data() : std::span<const double>{}, y.data());

  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return g.record(std::move(y), inputs, [x, w, b, geo](Graph& gr, const Tensor& gy) {
    if (gr.requires_grad(x))
      kernels::conv2d_backward_input(geo, gy.data(), gr.value(w).data(),
                                     gr.grad_accumulator(x).data());
    const bool need_w = gr.requires_grad(w);
    const bool need_b = b && gr.requires_grad(*b);
    if (need_w || need_b) {
      Tensor dw_scratch;
      std::span<double> dw;
      if (need_w) {
        dw = gr.grad_accumulator(w).data();
      } else {
        dw_scratch = Tensor(gr.value(w).shape());
        dw = dw_scratch.data();
      }
      kernels::conv2d_backward_params(geo, gy.data(), gr.value(x).data(), dw,
                                      need_b ? gr.grad_accumulator(*b).data() : std::span<double>{});
    }
  });
}

Var conv_transpose2d(Var x, Var w, std::optional<Var> b, std::size_t stride) {
  Graph& g = graph_of(x);
  require_same_graph(x, w);
  if (stride != 2) throw ConfigError("conv_transpose2d: only stride 2 is supported");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 4, "conv_transpose2d input");
  require_rank(wv, 4, "conv_transpose2d weight");
  if (wv.dim(0) != xv.dim(1) || wv.dim(2) != 2 || wv.dim(3) != 2)
    throw DimensionError("conv_transpose2d: weight " + shape_str(wv.shape()) +
                         " incompatible with input " + shape_str(xv.shape()));
  if (b && (b->value().rank() != 1 || b->value().dim(0) != wv.dim(1)))
    throw DimensionError("conv_transpose2d: bias size mismatch");

  kernels::Upsample2Geometry geo{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(1)};
  Tensor y(Shape{geo.batch, geo.out_channels, 2 * geo.height, 2 * geo.width});
  kernels::upsample2_forward(geo, xv.data(), wv.data(),
                             b ? b->value().data() : std::span<const double>{}, y.data());

  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return g.record(std::move(y), inputs, [x, w, b, geo](Graph& gr, const Tensor& gy) {
    if (gr.requires_grad(x))
      kernels::upsample2_backward_input(geo, gy.data(), gr.value(w).data(),
                                        gr.grad_accumulator(x).data());
    const bool need_w = gr.requires_grad(w);
    const bool need_b = b && gr.requires_grad(*b);
    if (need_w || need_b) {
      Tensor dw_scratch;
      std::span<double> dw;
      if (need_w) {
        dw = gr.grad_accumulator(w).data();
      } else {
        dw_scratch = Tensor(gr.value(w).shape());
        dw = dw_scratch.data();
      }
      kernels::upsample2_backward_params(
          geo, gy.data(), gr.value(x).data(), dw,
          need_b ? gr.grad_accumulator(*b).data() : std::span<double>{});
    }
  });
}

Var max_pool2(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 4, "max_pool2 input");
  const auto H = xv.dim(2), W = xv.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw DimensionError("max_pool2: spatial size must be even, got " + shape_str(xv.shape()));
  const std::size_t planes = xv.dim(0) * xv.dim(1);
  Tensor y(Shape{xv.dim(0), xv.dim(1), H / 2, W / 2});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(y.numel());
  kernels::max_pool2_forward(planes, H, W, xv.data(), y.data(), *argmax);
  if (g.tracking_branches()) g.note_branches(branch_digest(argmax->size(), [&](std::size_t i) { return (*argmax)[i]; }));
  return g.record(std::move(y), {x}, [x, argmax, planes, H, W](Graph& gr, const Tensor& gy) {
    kernels::max_pool2_backward(planes, H, W, gy.data(), *argmax, gr.grad_accumulator(x).data());
  });
}

Var leaky_relu(Var x, double slope) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  auto xs = xv.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] > 0.0 ? xs[i] : slope * xs[i];
  if (g.tracking_branches()) g.note_branches(branch_digest(xs.size(), [&](std::size_t i) { return xs[i] > 0.0; }));
  return g.record(std::move(y), {x}, [x, slope](Graph& gr, const Tensor& gy) {
    auto xs = gr.value(x).data();
    auto gx = gr.grad_accumulator(x).data();
    auto gs = gy.data();
    for (std::size_t i = 0; i < xs.size(); ++i) gx[i] += xs[i] > 0.0 ? gs[i] : slope * gs[i];
  });
}

Var softmax_channels(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 4, "softmax_channels input");
  const std::size_t N = xv.dim(0), C = xv.dim(1), P = xv.dim(2) * xv.dim(3);
  Tensor y(xv.shape());
  auto xs = xv.data();
  auto ys = y.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t base = n * C * P + p;
      double mx = xs[base];
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xs[base + c * P]);
      double total = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        ys[base + c * P] = std::exp(xs[base + c * P] - mx);
        total += ys[base + c * P];
      }
      for (std::size_t c = 0; c < C; ++c) ys[base + c * P] /= total;
    }
  // The node about to be recorded; its value is the softmax output.
  const Var out{&g, g.size()};
  return g.record(std::move(y), {x}, [x, N, C, P, out](Graph& gr, const Tensor& gy) {
    auto ys = gr.value(out).data();
    auto gx = gr.grad_accumulator(x).data();
    auto gs = gy.data();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t base = n * C * P + p;
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += gs[base + c * P] * ys[base + c * P];
        for (std::size_t c = 0; c < C; ++c)
          gx[base + c * P] += ys[base + c * P] * (gs[base + c * P] - dot);
      }
  });
}

Var concat_channels(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 4, "concat_channels lhs");
  require_rank(bv, 4, "concat_channels rhs");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
    throw DimensionError("concat_channels: " + shape_str(av.shape()) + " vs " +
                         shape_str(bv.shape()));
  const std::size_t N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), P = av.dim(2) * av.dim(3);
  Tensor y(Shape{N, Ca + Cb, av.dim(2), av.dim(3)});
  auto ys = y.data();
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(av.data().begin() + n * Ca * P, Ca * P, ys.begin() + n * (Ca + Cb) * P);
    std::copy_n(bv.data().begin() + n * Cb * P, Cb * P, ys.begin() + (n * (Ca + Cb) + Ca) * P);
  }
  return g.record(std::move(y), {a, b}, [a, b, N, Ca, Cb, P](Graph& gr, const Tensor& gy) {
    auto gs = gy.data();
    if (gr.requires_grad(a)) {
      auto ga = gr.grad_accumulator(a).data();
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < Ca * P; ++i) ga[n * Ca * P + i] += gs[n * (Ca + Cb) * P + i];
    }
    if (gr.requires_grad(b)) {
      auto gb = gr.grad_accumulator(b).data();
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < Cb * P; ++i)
          gb[n * Cb * P + i] += gs[(n * (Ca + Cb) + Ca) * P + i];
    }
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor y(a.value());
  add_into(y, b.value().data());
  return g.record(std::move(y), {a, b}, [a, b](Graph& gr, const Tensor& gy) {
    if (gr.requires_grad(a)) add_into(gr.grad_accumulator(a), gy.data());
    if (gr.requires_grad(b)) add_into(gr.grad_accumulator(b), gy.data());
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y(a.value());
  add_into(y, b.value().data(), -1.0);
  return g.record(std::move(y), {a, b}, [a, b](Graph& gr, const Tensor& gy) {
    if (gr.requires_grad(a)) add_into(gr.grad_accumulator(a), gy.data());
    if (gr.requires_grad(b)) add_into(gr.grad_accumulator(b), gy.data(), -1.0);
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y(a.value());
  auto ys = y.data();
  auto bs = b.value().data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] *= bs[i];
  return g.record(std::move(y), {a, b}, [a, b](Graph& gr, const Tensor& gy) {
    auto gs = gy.data();
    if (gr.requires_grad(a)) {
      auto bs = gr.value(b).data();
      auto ga = gr.grad_accumulator(a).data();
      for (std::size_t i = 0; i < gs.size(); ++i) ga[i] += gs[i] * bs[i];
    }
    if (gr.requires_grad(b)) {
      auto as = gr.value(a).data();
      auto gb = gr.grad_accumulator(b).data();
      for (std::size_t i = 0; i < gs.size(); ++i) gb[i] += gs[i] * as[i];
    }
  });
}

Var scale(Var a, double factor) {
  Graph& g = graph_of(a);
  Tensor y(a.value());
  for (auto& v : y.data()) v *= factor;
  return g.record(std::move(y), {a}, [a, factor](Graph& gr, const Tensor& gy) {
    add_into(gr.grad_accumulator(a), gy.data(), factor);
  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return g.record(Tensor::scalar(total), {a}, [a](Graph& gr, const Tensor& gy) {
    const double s = gy[0];
    for (auto& v : gr.grad_accumulator(a).data()) v += s;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().numel())); }

Var log_clamped(Var a, double floor) {
  Graph& g = graph_of(a);
  Tensor y(a.value().shape());
  auto xs = a.value().data();
  auto ys = y.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = std::log(std::max(xs[i], floor));
  if (g.tracking_branches()) g.note_branches(branch_digest(xs.size(), [&](std::size_t i) { return xs[i] > floor; }));
  return g.record(std::move(y), {a}, [a, floor](Graph& gr, const Tensor& gy) {
    auto xs = gr.value(a).data();
    auto ga = gr.grad_accumulator(a).data();
    auto gs = gy.data();
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (xs[i] > floor) ga[i] += gs[i] / xs[i];
  });
}

Var instance_norm(Var a, double eps) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  require_rank(av, 4, "instance_norm input");
  const std::size_t planes = av.dim(0) * av.dim(1), n = av.dim(2) * av.dim(3);
  Tensor y = av;
  std::vector<double> inv(planes);
  auto ys = y.data();
  for (std::size_t p = 0; p < planes; ++p) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += ys[p * n + i];
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) v += (ys[p * n + i] - m) * (ys[p * n + i] - m);
    inv[p] = 1.0 / std::sqrt(v / static_cast<double>(n) + eps);
    for (std::size_t i = 0; i < n; ++i) ys[p * n + i] = (ys[p * n + i] - m) * inv[p];
  }
  const Tensor yv = y;
  return g.record(std::move(y), {a}, [a, planes, n, inv = std::move(inv), yv](Graph& gr, const Tensor& gy) {
    if (!gr.requires_grad(a)) return;
    auto ga = gr.grad_accumulator(a).data();
    auto gs = gy.data();
    auto ys = yv.data();
    for (std::size_t p = 0; p < planes; ++p) {
      double mg = 0.0, mgy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        mg += gs[p * n + i];
        mgy += gs[p * n + i] * ys[p * n + i];
      }
      mg /= static_cast<double>(n);
      mgy /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) ga[p * n + i] += inv[p] * (gs[p * n + i] - mg - ys[p * n + i] * mgy);
    }
  });
}

}  // namespace aisp::ops
