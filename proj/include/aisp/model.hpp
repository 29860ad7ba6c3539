#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aisp/association.hpp"
#include "aisp/graph.hpp"
#include "aisp/implant.hpp"

namespace aisp {

struct ModelConfig {
  std::size_t interval = 8;                     // S, a power of two
  std::vector<std::size_t> widths{16, 32, 64};  // encoder widths, one per level
  std::size_t embed_dim = 8;                    // D
  std::size_t compress_mid = 16;                // hidden width of the compression chain
  std::size_t patch_size = 5;                   // K for the boundary loss
  VariantKind variant = VariantKind::kStandard;
  bool implant = true;  // false replaces the implant module by a plain 3x3 conv on E
  double slope = 0.1;
  // Per-sample, per-channel normalisation after each conv that feeds an
  // activation. Without it the association map saturates early in training.
  bool instance_norm = true;
  std::size_t in_channels = 3;

  static ModelConfig desk();
  static ModelConfig paper();

  std::size_t levels() const;
  void validate() const;  // throws ConfigError

  // key = value lines; the inverse of apply().
  std::string to_text() const;
  // Applies a recognised key; returns false for keys this struct does not own.
  bool apply(const std::string& key, const std::string& value);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct ForwardOptions {
  bool requires_grad = false;
  // Replaces the compressed cell embedding by zeros (ablation checks).
  bool zero_cell_embedding = false;
};

struct ForwardPass {
  Var q;               // [N, 9, H, W] association map
  Var embedding;       // [N, D, H, W] pixel embedding E
  Var superpixel;      // [N, C_top, h, w] superpixel embedding M
  Var cell_embedding;  // [N, D, h, w] compressed M; unset without the implant module
  Var fused;           // [N, D, H, W] output of the implant module (or its plain-conv stand-in)
  std::vector<Var> params;  // graph handles, same order as Model::parameters()
};

class Model {
 public:
  // Seeded uniform initialisation in [-a, a], a = sqrt(6 / ((1 + slope^2) fan_in));
  // zero biases.
  static Model build(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<NamedTensor>& parameters() noexcept { return params_; }
  const std::vector<NamedTensor>& parameters() const noexcept { return params_; }
  const Tensor& parameter(const std::string& name) const;
  Tensor& parameter(const std::string& name);
  std::size_t parameter_count() const;

  // images: [N, C, H, W] with H, W divisible by the interval.
  ForwardPass forward(Graph& graph, const Tensor& images, const ForwardOptions& options = {}) const;

  // Association map only, no gradient tracking.
  Tensor infer(const Tensor& images) const;

 private:
  explicit Model(ModelConfig config) : config_(std::move(config)) {}
  std::size_t index_of(const std::string& name) const;

  ModelConfig config_;
  std::vector<NamedTensor> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace aisp
