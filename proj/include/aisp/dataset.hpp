#pragma once

// Training and evaluation samples: synthetic Voronoi mosaics and the on-disk
// directory format (NAME.ppm + NAME.labels.pgm pairs).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aisp/labels.hpp"
#include "aisp/tensor.hpp"

namespace aisp {

struct SampleRecord {
  Tensor image;  // [3, H, W], values in [0, 1]
  LabelMap labels;
  std::string id;
};

struct SyntheticSpec {
  std::size_t count = 0;
  std::size_t size = 64;
  std::size_t regions = 12;
  double noise_sigma = 0.03;
  std::uint64_t seed = 0;
};

// Voronoi partition of `regions` distinct pixel sites; each region gets a
// uniform random colour plus clipped Gaussian noise. Sample i depends only on
// (seed, i).
SampleRecord synthetic_sample(const SyntheticSpec& spec, std::size_t index);
std::vector<SampleRecord> gen_synthetic(const SyntheticSpec& spec);

// Lexicographic by NAME. Throws FormatError naming the offending file(s).
std::vector<SampleRecord> load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const std::vector<SampleRecord>& samples);

}  // namespace aisp
