#pragma once

// Netpbm readers and writers. Colour images are [3, H, W] tensors with values
// in [0, 1]; label maps are 16-bit graymaps whose samples are class ids.

#include <filesystem>
#include <string>

#include "aisp/labels.hpp"
#include "aisp/tensor.hpp"

namespace aisp {

// Binary P6, maxval <= 255.
Tensor decode_ppm(const std::string& bytes, const std::string& source = "<memory>");
std::string encode_ppm(const Tensor& image);  // values clamped to [0,1], rounded

// Binary P5. 16-bit samples are big-endian; 8-bit files are accepted too.
// num_classes is set to max id + 1.
LabelMap decode_pgm_labels(const std::string& bytes, const std::string& source = "<memory>");
std::string encode_pgm_labels(const LabelImage& labels);  // always 16-bit

Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& image);
LabelMap read_pgm_labels(const std::filesystem::path& path);
void write_pgm_labels(const std::filesystem::path& path, const LabelImage& labels);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace aisp
