#include "aisp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "aisp/association.hpp"
#include "aisp/boundary_loss.hpp"
#include "aisp/dataset.hpp"
#include "aisp/errors.hpp"
#include "aisp/implant.hpp"
#include "aisp/model.hpp"
#include "aisp/ops.hpp"

namespace aisp {

namespace {

constexpr double kEps = 1e-4;
constexpr double kModelEps = 1e-3;
constexpr std::size_t kPerInput = 24;
constexpr std::size_t kModelCoordinates = 20;
constexpr int kModelAttempts = 2000;

// Random projection turning any tensor output into a scalar.
Var project(Var out, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 0x70726f6a);
  Graph& g = *out.graph;
  return ops::sum(ops::mul(out, g.constant(Tensor::uniform(out.shape(), -1.0, 1.0, rng))));
}

// Uniform values with |v| >= margin, so kinks stay out of reach.
Tensor away_from_zero(Shape shape, double margin, Rng& rng) {
  Tensor t = Tensor::uniform(std::move(shape), -1.0, 1.0, rng);
  for (auto& v : t.data())
    while (std::abs(v) < margin) v = rand_unit(rng) * 2.0 - 1.0;
  return t;
}

// Every 2x2 block has a unique maximum ahead of the runner-up by `margin`.
Tensor untied_blocks(Shape shape, double margin, Rng& rng) {
  Tensor t = Tensor::uniform(shape, -1.0, 1.0, rng);
  const std::size_t P = shape[0] * shape[1], H = shape[2], W = shape[3];
  auto d = t.data();
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t y = 0; y < H; y += 2)
      for (std::size_t x = 0; x < W; x += 2) {
        double* v[4] = {&d[(p * H + y) * W + x], &d[(p * H + y) * W + x + 1], &d[(p * H + y + 1) * W + x],
                        &d[(p * H + y + 1) * W + x + 1]};
        for (;;) {
          double vals[4] = {*v[0], *v[1], *v[2], *v[3]};
          std::sort(vals, vals + 4);
          if (vals[3] - vals[2] >= margin) break;
          for (auto* e : v) *e = rand_unit(rng) * 2.0 - 1.0;
        }
      }
  return t;
}

LabelMap two_region_labels(std::size_t H, std::size_t W, Rng& rng) {
  // Slanted split so patches see varied member counts.
  LabelMap labels(H, W, 2);
  const double slope = 0.3 + rand_unit(rng), offset = static_cast<double>(W) * (0.3 + 0.4 * rand_unit(rng));
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      labels.at(y, x) = static_cast<double>(x) > offset + slope * (static_cast<double>(y) - H / 2.0) ? 1 : 0;
  return labels;
}

using Check = std::function<GradcheckResult(Rng&)>;

std::map<std::string, Check> registry() {
  std::map<std::string, Check> r;

  r["conv2d"] = [](Rng& rng) {
    auto fn = [](Graph&, const std::vector<Var>& in) { return project(ops::conv2d(in[0], in[1], in[2], 1, 1), 1); };
    auto fn2 = [](Graph&, const std::vector<Var>& in) { return project(ops::conv2d(in[0], in[1], in[2], 2, 1), 2); };
    const std::vector<Tensor> inputs{Tensor::uniform({2, 3, 6, 6}, -1, 1, rng), Tensor::uniform({4, 3, 3, 3}, -1, 1, rng),
                                     Tensor::uniform({4}, -1, 1, rng)};
    auto a = check_gradient("conv2d", fn, inputs, kEps, kPerInput, rng);
    const std::vector<Tensor> strided{Tensor::uniform({1, 2, 7, 7}, -1, 1, rng), Tensor::uniform({3, 2, 3, 3}, -1, 1, rng),
                                      Tensor::uniform({3}, -1, 1, rng)};
    auto b = check_gradient("conv2d", fn2, strided, kEps, kPerInput, rng);
    a.max_rel_error = std::max(a.max_rel_error, b.max_rel_error);
    a.checked += b.checked;
    return a;
  };
  r["conv_transpose2d"] = [](Rng& rng) {
    auto fn = [](Graph&, const std::vector<Var>& in) { return project(ops::conv_transpose2d(in[0], in[1], in[2]), 3); };
    return check_gradient("conv_transpose2d", fn,
                          {Tensor::uniform({2, 3, 3, 3}, -1, 1, rng), Tensor::uniform({3, 2, 2, 2}, -1, 1, rng),
                           Tensor::uniform({2}, -1, 1, rng)},
                          kEps, kPerInput, rng);
  };
  r["max_pool2"] = [](Rng& rng) {
    auto fn = [](Graph&, const std::vector<Var>& in) { return project(ops::max_pool2(in[0]), 4); };
    return check_gradient("max_pool2", fn, {untied_blocks({2, 2, 6, 6}, 1e-3, rng)}, kEps, 72, rng);
  };
  r["leaky_relu"] = [](Rng& rng) {
    auto fn = [](Graph&, const std::vector<Var>& in) { return project(ops::leaky_relu(in[0], 0.1), 5); };
    return check_gradient("leaky_relu", fn, {away_from_zero({1, 2, 5, 5}, 1e-3, rng)}, kEps, 50, rng);
  };
  r["instance_norm"] = [](Rng& rng) {
    auto fn = [](Graph&, const std::vector<Var>& in) { return project(ops::instance_norm(in[0]), 9); };
    return check_gradient("instance_norm", fn, {Tensor::uniform({2, 3, 4, 5}, -1, 1, rng)}, kEps, 40, rng);
  };
  r["softmax_channels"] = [](Rng& rng) {
    auto fn = [](Graph&, const std::vector<Var>& in) { return project(ops::softmax_channels(in[0]), 6); };
    return check_gradient("softmax_channels", fn, {Tensor::uniform({2, 9, 3, 4}, -3, 3, rng)}, kEps, 48, rng);
  };
  r["aggregate"] = [](Rng& rng) {
    const GridSpec grid = GridSpec::create(8, 12, 4);
    auto fn = [grid](Graph&, const std::vector<Var>& in) {
      return project(aggregate_superpixel_property(ops::softmax_channels(in[0]), in[1], grid), 7);
    };
    return check_gradient("aggregate", fn,
                          {Tensor::uniform({2, 9, 8, 12}, -2, 2, rng), Tensor::uniform({2, 3, 8, 12}, -1, 1, rng)},
                          kEps, kPerInput, rng);
  };
  r["reconstruct"] = [](Rng& rng) {
    const GridSpec grid = GridSpec::create(8, 12, 4);
    auto fn = [grid](Graph&, const std::vector<Var>& in) {
      return project(reconstruct_pixel_property(ops::softmax_channels(in[0]), in[1], grid), 8);
    };
    return check_gradient("reconstruct", fn,
                          {Tensor::uniform({2, 9, 8, 12}, -2, 2, rng), Tensor::uniform({2, 3, 2, 3}, -1, 1, rng)},
                          kEps, kPerInput, rng);
  };
  r["task_loss"] = [](Rng& rng) {
    const GridSpec grid = GridSpec::create(16, 16, 8);
    std::vector<LabelMap> labels{two_region_labels(16, 16, rng), two_region_labels(16, 16, rng)};
    auto fn = [grid, labels](Graph&, const std::vector<Var>& in) {
      return task_loss(ops::softmax_channels(in[0]), labels, grid, 0.5).total;
    };
    return check_gradient("task_loss", fn, {Tensor::uniform({2, 9, 16, 16}, -2, 2, rng)}, kEps, 64, rng);
  };
  r["compress_channels"] = [](Rng& rng) {
    auto fn = [](Graph&, const std::vector<Var>& in) {
      return project(compress_channels(in[0], CompressionLayers{in[1], in[2], in[3], in[4]}, 0.1), 9);
    };
    return check_gradient("compress_channels", fn,
                          {Tensor::uniform({1, 4, 3, 3}, -1, 1, rng), Tensor::uniform({5, 4, 3, 3}, -1, 1, rng),
                           Tensor::uniform({5}, -1, 1, rng), Tensor::uniform({3, 5, 3, 3}, -1, 1, rng),
                           Tensor::uniform({3}, -1, 1, rng)},
                          kEps, kPerInput, rng);
  };
  for (auto variant : {VariantKind::kStandard, VariantKind::kPixelNeighbors, VariantKind::kCenterPixel}) {
    const std::string name = "implant_" + variant_name(variant);
    r[name] = [variant, name](Rng& rng) {
      const GridSpec grid = GridSpec::create(8, 8, 4);
      auto fn = [grid, variant](Graph&, const std::vector<Var>& in) {
        return project(implant_fuse(in[0], in[1], in[2], in[3], grid, variant), 10);
      };
      return check_gradient(name, fn,
                            {Tensor::uniform({2, 3, 8, 8}, -1, 1, rng), Tensor::uniform({2, 3, 2, 2}, -1, 1, rng),
                             Tensor::uniform({2, 3, 3, 3}, -1, 1, rng), Tensor::uniform({2}, -1, 1, rng)},
                            kEps, kPerInput, rng);
    };
  }
  r["boundary_loss"] = [](Rng& rng) {
    const LabelMap labels = two_region_labels(12, 12, rng);
    const auto samples = sample_boundary_batch(std::span<const LabelMap>(&labels, 1), 5, 6, rng);
    auto fn = [samples](Graph&, const std::vector<Var>& in) { return boundary_loss(in[0], samples); };
    return check_gradient("boundary_loss", fn, {Tensor::uniform({1, 4, 12, 12}, -1, 1, rng)}, kEps, 64, rng);
  };
  r["model"] = [](Rng& rng) {
    // Full objective: reconstruction terms plus the boundary term on fixed
    // patches. Coordinates whose +-eps probes change any branch of the
    // network are redrawn.
    ModelConfig cfg = ModelConfig::desk();
    const Model model = Model::build(cfg, 5);
    const GridSpec grid = GridSpec::create(16, 16, cfg.interval);
    SyntheticSpec spec{1, 16, 3, 0.03, 11};
    const SampleRecord sample = synthetic_sample(spec, 0);
    const Tensor images = sample.image.reshaped({1, 3, 16, 16});
    std::vector<LabelMap> labels{sample.labels};
    const auto patches = sample_boundary_batch(labels, cfg.patch_size, 8, rng);

    auto objective = [&](Graph& g, const Model& m, ForwardPass& pass) {
      g.track_branches(true);
      pass = m.forward(g, images, ForwardOptions{true, false});
      const TaskLoss t = task_loss(pass.q, labels, grid, 0.003 / 16);
      return ops::add(t.total, ops::scale(boundary_loss(pass.embedding, patches), 0.5));
    };
    auto probe = [&](const Model& m) {
      Graph g;
      ForwardPass pass;
      const double v = objective(g, m, pass).value().item();
      return std::make_pair(v, g.branch_signature());
    };
    Graph g;
    ForwardPass pass;
    g.backward(objective(g, model, pass));
    const std::uint64_t base = g.branch_signature();

    GradcheckResult res{"model", 0.0, 0};
    Model m = model;
    for (int attempt = 0; attempt < kModelAttempts && res.checked < kModelCoordinates; ++attempt) {
      const auto pi = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(model.parameters().size())));
      const std::size_t n = model.parameters()[pi].value.numel();
      const auto ei = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(n)));
      const double orig = model.parameters()[pi].value[ei];
      m.parameters()[pi].value[ei] = orig + kModelEps;
      const auto up = probe(m);
      m.parameters()[pi].value[ei] = orig - kModelEps;
      const auto down = probe(m);
      m.parameters()[pi].value[ei] = orig;
      if (up.second != base || down.second != base) continue;
      const double numeric = (up.first - down.first) / (2.0 * kModelEps);
      res.max_rel_error = std::max(res.max_rel_error, gradcheck_relative_error(g.grad(pass.params[pi])[ei], numeric));
      ++res.checked;
    }
    // Too few smooth coordinates is a failure, not a pass.
    if (res.checked < kModelCoordinates) res.max_rel_error = std::numeric_limits<double>::infinity();
    return res;
  };
  return r;
}

}  // namespace

double gradcheck_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckResult check_gradient(const std::string& name, const ScalarFn& fn, const std::vector<Tensor>& inputs,
                               double eps, std::size_t per_input, Rng& rng) {
  auto evaluate = [&](const std::vector<Tensor>& values) {
    Graph g;
    g.track_branches(true);
    std::vector<Var> vars;
    for (const auto& v : values) vars.push_back(g.parameter(v));
    const double out = fn(g, vars).value().item();
    return std::make_pair(out, g.branch_signature());
  };

  Graph g;
  g.track_branches(true);
  std::vector<Var> vars;
  for (const auto& v : inputs) vars.push_back(g.parameter(v));
  const Var out = fn(g, vars);
  if (out.value().numel() != 1) throw UsageError("gradcheck function must return a scalar");
  g.backward(out);
  const std::uint64_t base = g.branch_signature();

  GradcheckResult res{name, 0.0, 0};
  std::vector<Tensor> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor grad = g.grad(vars[i]);
    const std::size_t n = inputs[i].numel();
    std::vector<std::size_t> coords(n);
    for (std::size_t k = 0; k < n; ++k) coords[k] = k;
    std::shuffle(coords.begin(), coords.end(), rng);
    std::size_t taken = 0;
    for (auto k : coords) {
      if (taken == per_input) break;
      const double orig = work[i][k];
      work[i][k] = orig + eps;
      const auto up = evaluate(work);
      work[i][k] = orig - eps;
      const auto down = evaluate(work);
      work[i][k] = orig;
      // A probe that lands on another smooth piece says nothing about the derivative.
      if (up.second != base || down.second != base) continue;
      res.max_rel_error =
          std::max(res.max_rel_error, gradcheck_relative_error(grad[k], (up.first - down.first) / (2.0 * eps)));
      ++res.checked;
      ++taken;
    }
  }
  return res;
}

std::vector<std::string> gradcheck_scopes() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

std::vector<GradcheckResult> run_gradchecks(const std::string& scope, std::uint64_t seed) {
  const auto checks = registry();
  std::vector<GradcheckResult> out;
  std::uint64_t slot = 0;
  for (const auto& [name, fn] : checks) {
    ++slot;
    if (scope != "all" && scope != name) continue;
    Rng rng = derive_rng(seed, slot);
    out.push_back(fn(rng));
  }
  if (out.empty()) throw ConfigError("unknown gradcheck scope '" + scope + "'");
  return out;
}

}  // namespace aisp
