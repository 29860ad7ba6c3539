#include "aisp/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

#include "aisp/errors.hpp"
#include "aisp/image_io.hpp"
#include "aisp/random.hpp"

namespace aisp {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSyntheticStream = 0x766f726f6eULL;
constexpr const char* kLabelSuffix = ".labels.pgm";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

SampleRecord synthetic_sample(const SyntheticSpec& spec, std::size_t index) {
  if (spec.regions < 2) throw ConfigError("synthetic data needs at least 2 regions");
  if (spec.size == 0 || spec.regions > spec.size * spec.size)
    throw ConfigError("synthetic image too small for the region count");
  if (spec.noise_sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
  Rng rng = derive_rng(spec.seed, kSyntheticStream, index);
  const std::size_t n = spec.size;

  // Sites sit on distinct pixels, so every region owns at least its site.
  std::vector<std::pair<std::size_t, std::size_t>> sites;
  std::set<std::size_t> used;
  while (sites.size() < spec.regions) {
    const auto y = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(n)));
    const auto x = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(n)));
    if (used.insert(y * n + x).second) sites.emplace_back(y, x);
  }
  std::vector<double> colours(3 * spec.regions);
  for (auto& c : colours) c = rand_unit(rng);

  SampleRecord s;
  s.labels = LabelMap(n, n, static_cast<std::int32_t>(spec.regions));
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      std::size_t best = 0;
      std::size_t best_d = std::numeric_limits<std::size_t>::max();
      for (std::size_t r = 0; r < sites.size(); ++r) {
        const auto dy = static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(sites[r].first);
        const auto dx = static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(sites[r].second);
        const auto d = static_cast<std::size_t>(dy * dy + dx * dx);
        if (d < best_d) best_d = d, best = r;
      }
      s.labels.at(y, x) = static_cast<std::int32_t>(best);
    }

  s.image = Tensor(Shape{3, n, n});
  std::normal_distribution<double> noise(0.0, 1.0);
  auto d = s.image.data();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n * n; ++i) {
      const double base = colours[3 * static_cast<std::size_t>(s.labels.ids[i]) + c];
      const double jitter = spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(rng) : 0.0;
      d[c * n * n + i] = std::clamp(base + jitter, 0.0, 1.0);
    }

  char name[32];
  std::snprintf(name, sizeof name, "synth_%05zu", index);
  s.id = name;
  return s;
}

std::vector<SampleRecord> gen_synthetic(const SyntheticSpec& spec) {
  std::vector<SampleRecord> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) out.push_back(synthetic_sample(spec, i));
  return out;
}

std::vector<SampleRecord> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("'" + dir.string() + "' is not a directory");
  std::map<std::string, fs::path> images, labels;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (ends_with(name, kLabelSuffix))
      labels[name.substr(0, name.size() - std::string(kLabelSuffix).size())] = entry.path();
    else if (ends_with(name, ".ppm"))
      images[name.substr(0, name.size() - 4)] = entry.path();
  }
  for (const auto& [stem, path] : labels)
    if (!images.count(stem)) throw FormatError("'" + path.string() + "' has no matching " + stem + ".ppm");

  std::vector<SampleRecord> out;
  for (const auto& [stem, image_path] : images) {
    const auto it = labels.find(stem);
    if (it == labels.end())
      throw FormatError("'" + image_path.string() + "' has no matching " + stem + kLabelSuffix);
    SampleRecord s;
    s.image = read_ppm(image_path);
    s.labels = read_pgm_labels(it->second);
    if (s.labels.height != s.image.dim(1) || s.labels.width != s.image.dim(2))
      throw FormatError("size mismatch: '" + image_path.string() + "' is " +
                        std::to_string(s.image.dim(2)) + "x" + std::to_string(s.image.dim(1)) +
                        " but '" + it->second.string() + "' is " + std::to_string(s.labels.width) +
                        "x" + std::to_string(s.labels.height));
    s.id = stem;
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const fs::path& dir, const std::vector<SampleRecord>& samples) {
  fs::create_directories(dir);
  for (const auto& s : samples) {
    write_ppm(dir / (s.id + ".ppm"), s.image);
    write_pgm_labels(dir / (s.id + kLabelSuffix), s.labels);
  }
}

}  // namespace aisp
