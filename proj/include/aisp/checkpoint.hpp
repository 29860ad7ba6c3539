#pragma once

// Binary checkpoint, all integers and floats little-endian:
//
//   "AISP"            4-byte magic
//   u16               format version (1)
//   u32 + bytes       model config snapshot (key = value text)
//   u64               training iteration
//   u32 + bytes       rng state (textual engine state, may be empty)
//   u8                optimizer present
//   [u64 step, f64 beta1, f64 beta2, f64 epsilon]   when present
//   u32               tensor count, then per tensor:
//     u32 + bytes     name
//     u8              dtype tag (1 = float64)
//     u32             rank
//     u64 x rank      dims
//     raw data
//
// Optimizer moments are stored as tensors named "adam.m/<param>" and
// "adam.v/<param>".

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aisp/adam.hpp"
#include "aisp/model.hpp"

namespace aisp {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::vector<NamedTensor> tensors;
  std::optional<AdamState> optimizer;
  std::uint64_t iteration = 0;
  std::string rng_state;
};

Checkpoint make_checkpoint(const Model& model, const AdamState* optimizer = nullptr,
                           std::uint64_t iteration = 0, std::string rng_state = {});

std::string serialize_checkpoint(const Checkpoint& checkpoint);
// Throws FormatError on bad magic, version, or truncation.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies the checkpoint's parameters into `model`. Throws CompatibilityError
// naming the first tensor that is missing or differently shaped; the model is
// untouched on failure.
void load_parameters(Model& model, const Checkpoint& checkpoint);

// Rebuilds a model from the checkpoint's config snapshot.
Model model_from_checkpoint(const Checkpoint& checkpoint);

// Optimizer state aligned with model.parameters(); nullopt when absent.
std::optional<AdamState> optimizer_from_checkpoint(const Model& model, const Checkpoint& checkpoint);

}  // namespace aisp
