#pragma once

// Two-stage training loop. Stage 1 minimises the reconstruction losses; from
// stage1_iters on the boundary term is added with weight alpha.
//
// Every random draw of iteration i comes from streams derived from
// (seed, i, slot), so a run resumed from a checkpoint at iteration k follows
// exactly the same trajectory as an uninterrupted one.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aisp/adam.hpp"
#include "aisp/config.hpp"
#include "aisp/dataset.hpp"
#include "aisp/model.hpp"

namespace aisp {

struct LossRecord {
  std::size_t iter = 0;
  double loss = 0.0;
  double ce = 0.0;
  double pos = 0.0;
  double bpl = 0.0;  // 0 in stage 1
  double lr = 0.0;
};

struct Batch {
  Tensor images;  // [B, 3, crop, crop]
  std::vector<LabelMap> labels;
};

struct TrainState {
  AdamState optimizer;
  std::size_t iteration = 0;

  static TrainState fresh(const Model& model);
};

struct TrainOptions {
  // Written every checkpoint_every iterations and at the end; empty disables.
  std::filesystem::path checkpoint_path;
  std::function<void(const LossRecord&)> on_iteration;
};

// Random crop, then each augmentation op with probability augment_prob.
Batch assemble_batch(std::span<const SampleRecord> data, const TrainConfig& cfg,
                     std::size_t iteration);

// One optimisation step on `batch`; updates the model and the optimizer.
LossRecord train_step(Model& model, const Batch& batch, const TrainConfig& cfg, TrainState& state);

// Runs from state.iteration up to cfg.total_iters. Throws NumericError naming
// the term when a loss goes non-finite.
std::vector<LossRecord> train(Model& model, std::span<const SampleRecord> data,
                              const TrainConfig& cfg, TrainState& state,
                              const TrainOptions& options = {});

std::string loss_csv(std::span<const LossRecord> trace);

// Seed marker stored as the checkpoint's rng state.
std::string rng_state_text(const TrainConfig& cfg);

}  // namespace aisp
