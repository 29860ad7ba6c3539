#include "aisp/evaluate.hpp"

#include <chrono>

#include "aisp/errors.hpp"
#include "aisp/image_io.hpp"
#include "aisp/segment.hpp"
#include "aisp/svg.hpp"

namespace aisp {

MetricReport evaluate_count(const Model* model, std::span<const SampleRecord> data, std::size_t count,
                            std::size_t tol, std::size_t interval) {
  if (data.empty()) throw ConfigError("evaluation set is empty");
  if (model != nullptr) interval = model->config().interval;
  if (interval == 0) throw ConfigError("grid baseline needs an interval");
  MetricReport report;
  for (const auto& s : data) {
    const auto t0 = std::chrono::steady_clock::now();
    const SuperpixelSegmentation seg =
        model != nullptr ? segment_image(*model, s.image, count)
                         : grid_segmentation(s.image.dim(1), s.image.dim(2), interval, count);
    const auto t1 = std::chrono::steady_clock::now();
    const BoundaryScores b = boundary_metrics(seg, s.labels, tol);
    report.n_superpixels += static_cast<double>(seg.count);
    report.asa += asa(seg, s.labels);
    report.br += b.recall;
    report.bp += b.precision;
    report.runtime_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  const double n = static_cast<double>(data.size());
  report.n_superpixels /= n;
  report.asa /= n;
  report.br /= n;
  report.bp /= n;
  report.runtime_ms /= n;
  return report;
}

std::vector<MetricReport> evaluate_counts(const Model* model, std::span<const SampleRecord> data,
                                          std::span<const std::size_t> counts, std::size_t tol,
                                          std::size_t interval) {
  std::vector<MetricReport> rows;
  for (auto c : counts) rows.push_back(evaluate_count(model, data, c, tol, interval));
  return rows;
}

void write_eval_outputs(const std::filesystem::path& dir, std::span<const MetricReport> rows,
                        bool with_timing) {
  std::filesystem::create_directories(dir);
  write_file(dir / "metrics.csv", metrics_csv(rows, with_timing));
  ChartSeries asa_series{"ASA", {}}, br{"BR", {}}, bp{"BP", {}};
  for (const auto& r : rows) {
    asa_series.points.emplace_back(r.n_superpixels, r.asa);
    br.points.emplace_back(r.n_superpixels, r.br);
    bp.points.emplace_back(r.n_superpixels, r.bp);
  }
  write_file(dir / "asa.svg", line_chart("Achievable segmentation accuracy", "superpixels", "ASA", {asa_series}));
  write_file(dir / "br_bp.svg", line_chart("Boundary recall and precision", "superpixels", "score", {br, bp}));
}

}  // namespace aisp
