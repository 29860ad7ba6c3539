#pragma once

// Dataset-level evaluation sweeps over requested superpixel counts.

#include <filesystem>
#include <span>
#include <vector>

#include "aisp/dataset.hpp"
#include "aisp/metrics.hpp"
#include "aisp/model.hpp"

namespace aisp {

// Mean ASA / BR / BP over the dataset at one requested count; n_superpixels
// is the mean achieved count and runtime_ms the mean segmentation time per
// image. A null model evaluates the regular grid baseline.
MetricReport evaluate_count(const Model* model, std::span<const SampleRecord> data, std::size_t count,
                            std::size_t tol = kDefaultTolerance, std::size_t interval = 0);

std::vector<MetricReport> evaluate_counts(const Model* model, std::span<const SampleRecord> data,
                                          std::span<const std::size_t> counts,
                                          std::size_t tol = kDefaultTolerance, std::size_t interval = 0);

// metrics.csv, asa.svg and br_bp.svg in `dir` (created if missing).
void write_eval_outputs(const std::filesystem::path& dir, std::span<const MetricReport> rows,
                        bool with_timing = true);

}  // namespace aisp
