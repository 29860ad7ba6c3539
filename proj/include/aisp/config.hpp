#pragma once

// Experiment configuration files: UTF-8 text, one `key = value` per line,
// `#` starts a comment. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>

#include "aisp/augment.hpp"
#include "aisp/model.hpp"

namespace aisp {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 4;
  std::size_t total_iters = 600;
  std::size_t stage1_iters = 450;
  std::size_t lr_halving_period = 300;  // 0 disables halving
  double lambda = 0.003 / 16.0;         // position term weight
  double alpha = 0.5;                   // boundary term weight (stage 2)
  std::size_t crop = 64;
  std::uint64_t seed = 1;
  std::size_t max_patches = 32;  // per image per step
  double augment_prob = 0.5;     // per op per sample
  std::size_t checkpoint_every = 500;
  AugmentConfig augment;

  static TrainConfig paper();

  double lr_at(std::size_t iteration) const;
  void validate(std::size_t interval) const;  // throws ConfigError
};

struct DataConfig {
  std::size_t size = 64;
  std::size_t regions = 12;
  double noise_sigma = 0.03;
};

struct ExperimentConfig {
  ModelConfig model = ModelConfig::desk();
  TrainConfig train;
  DataConfig data;

  void validate() const;
  std::string to_text() const;
};

// Throws ConfigError with the line number for syntax errors, unknown keys and
// bad values.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace aisp
