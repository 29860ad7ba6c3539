#include "aisp/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "aisp/augment.hpp"
#include "aisp/boundary_loss.hpp"
#include "aisp/checkpoint.hpp"
#include "aisp/errors.hpp"
#include "aisp/ops.hpp"
#include "aisp/random.hpp"

namespace aisp {

namespace {

// Stream slot for boundary patch sampling; sample slots are 0..batch-1.
constexpr std::uint64_t kPatchSlot = 1ULL << 32;

void check_finite(double v, const char* term, std::size_t iteration) {
  if (!std::isfinite(v))
    throw NumericError(std::string("non-finite ") + term + " loss (" + std::to_string(v) +
                       ") at iteration " + std::to_string(iteration));
}

}  // namespace

TrainState TrainState::fresh(const Model& model) {
  std::vector<Tensor> values;
  for (const auto& p : model.parameters()) values.push_back(p.value);
  return TrainState{AdamState::for_parameters(values), 0};
}

Batch assemble_batch(std::span<const SampleRecord> data, const TrainConfig& cfg,
                     std::size_t iteration) {
  if (data.empty()) throw ConfigError("training set is empty");
  const std::size_t crop = cfg.crop;
  Batch batch;
  batch.images = Tensor(Shape{cfg.batch, 3, crop, crop});
  auto dst = batch.images.data();
  for (std::size_t b = 0; b < cfg.batch; ++b) {
    Rng rng = derive_rng(cfg.seed, iteration, b);
    const auto& s = data[static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(data.size())))];
    const std::size_t H = s.image.dim(1), W = s.image.dim(2);
    if (H < crop || W < crop)
      throw ConfigError("sample '" + s.id + "' is smaller than the crop size");
    const auto y0 = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(H - crop + 1)));
    const auto x0 = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(W - crop + 1)));

    AugmentedSample cur{Tensor(Shape{3, crop, crop}), LabelMap(crop, crop, s.labels.num_classes)};
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < crop; ++y)
        for (std::size_t x = 0; x < crop; ++x)
          cur.image.data()[(c * crop + y) * crop + x] = s.image.data()[(c * H + y0 + y) * W + x0 + x];
    for (std::size_t y = 0; y < crop; ++y)
      for (std::size_t x = 0; x < crop; ++x) cur.labels.at(y, x) = s.labels.at(y0 + y, x0 + x);

    if (cfg.augment.shuffle && rand_unit(rng) < cfg.augment_prob)
      cur = patch_shuffle(cur.image, cur.labels, cfg.augment, rng);
    if (cfg.augment.shift && rand_unit(rng) < cfg.augment_prob) {
      const auto dir = rand_int(rng, 0, 2) == 0 ? ShiftDirection::kHorizontal : ShiftDirection::kVertical;
      cur = random_shift(cur.image, cur.labels, cfg.augment, dir, rng);
    }
    std::copy(cur.image.data().begin(), cur.image.data().end(), dst.begin() + b * 3 * crop * crop);
    batch.labels.push_back(std::move(cur.labels));
  }
  return batch;
}

LossRecord train_step(Model& model, const Batch& batch, const TrainConfig& cfg, TrainState& state) {
  const std::size_t it = state.iteration;
  const auto& mc = model.config();
  const GridSpec grid = GridSpec::create(batch.images.dim(2), batch.images.dim(3), mc.interval);

  Graph graph;
  const ForwardPass pass = model.forward(graph, batch.images, ForwardOptions{true, false});
  const TaskLoss task = task_loss(pass.q, batch.labels, grid, cfg.lambda);

  LossRecord rec;
  rec.iter = it;
  rec.lr = cfg.lr_at(it);
  rec.ce = task.ce.value().item();
  rec.pos = task.position.value().item();
  check_finite(rec.ce, "cross-entropy", it);
  check_finite(rec.pos, "position", it);

  Var total = task.total;
  if (it >= cfg.stage1_iters) {
    Rng rng = derive_rng(cfg.seed, it, kPatchSlot);
    const auto samples = sample_boundary_batch(batch.labels, mc.patch_size, cfg.max_patches, rng);
    const Var bpl = boundary_loss(pass.embedding, samples);
    rec.bpl = bpl.value().item();
    check_finite(rec.bpl, "boundary", it);
    if (cfg.alpha != 0.0) total = ops::add(total, ops::scale(bpl, cfg.alpha));
  }
  rec.loss = total.value().item();
  check_finite(rec.loss, "total", it);

  graph.backward(total);
  std::vector<Tensor> grads;
  grads.reserve(pass.params.size());
  for (const Var& p : pass.params) grads.push_back(graph.grad(p));
  std::vector<Tensor> values;
  values.reserve(pass.params.size());
  auto& params = model.parameters();
  for (auto& p : params) values.push_back(std::move(p.value));
  adam_step(values, grads, state.optimizer, rec.lr);
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = std::move(values[i]);
  ++state.iteration;
  return rec;
}

std::string rng_state_text(const TrainConfig& cfg) {
  return "derived-streams seed=" + std::to_string(cfg.seed);
}

std::vector<LossRecord> train(Model& model, std::span<const SampleRecord> data,
                              const TrainConfig& cfg, TrainState& state,
                              const TrainOptions& options) {
  cfg.validate(model.config().interval);
  std::vector<LossRecord> trace;
  auto save = [&] {
    if (options.checkpoint_path.empty()) return;
    save_checkpoint(make_checkpoint(model, &state.optimizer, state.iteration, rng_state_text(cfg)),
                    options.checkpoint_path);
  };
  while (state.iteration < cfg.total_iters) {
    const Batch batch = assemble_batch(data, cfg, state.iteration);
    trace.push_back(train_step(model, batch, cfg, state));
    if (options.on_iteration) options.on_iteration(trace.back());
    if (cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 &&
        state.iteration < cfg.total_iters)
      save();
  }
  save();
  return trace;
}

std::string loss_csv(std::span<const LossRecord> trace) {
  std::string out = "iter,loss,ce,pos,bpl\n";
  char buf[160];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.loss, r.ce, r.pos, r.bpl);
    out += buf;
  }
  return out;
}

}  // namespace aisp
