#include "aisp/augment.hpp"

#include <utility>

#include "aisp/errors.hpp"

namespace aisp {

void AugmentConfig::validate() const {
  if (interval < 2) throw ConfigError("augment interval must be at least 2");
  if (!(p_replace >= 0.0 && p_replace <= 1.0)) throw ConfigError("p_replace must lie in [0, 1]");
}

namespace {

void check_inputs(const Tensor& image, const LabelMap& labels, std::size_t interval) {
  require_rank(image, 3, "augment image");
  if (image.dim(1) != labels.height || image.dim(2) != labels.width)
    throw DimensionError("image and label map sizes differ");
  if (labels.height % interval != 0 || labels.width % interval != 0)
    throw ConfigError("image size is not divisible by the augment interval");
}

// Fills the rectangle with uniform noise and a fresh label.
void replace_with_noise(AugmentedSample& s, std::size_t y0, std::size_t x0, std::size_t h,
                        std::size_t w, Rng& rng) {
  const std::size_t C = s.image.dim(0), H = s.image.dim(1), W = s.image.dim(2);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = y0; y < y0 + h; ++y)
      for (std::size_t x = x0; x < x0 + w; ++x) s.image[(c * H + y) * W + x] = rand_unit(rng);
  const std::int32_t fresh = s.labels.num_classes++;
  for (std::size_t y = y0; y < y0 + h; ++y)
    for (std::size_t x = x0; x < x0 + w; ++x) s.labels.at(y, x) = fresh;
}

}  // namespace

AugmentedSample patch_shuffle(const Tensor& image, const LabelMap& labels,
                              const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  check_inputs(image, labels, cfg.interval);
  AugmentedSample out{image, labels};
  const std::size_t S = cfg.interval, C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const std::size_t cols = W / S, patches = (H / S) * cols;
  if (patches < 2) return out;

  const auto a = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(patches)));
  auto b = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(patches) - 1));
  if (b >= a) ++b;
  const std::size_t ay = (a / cols) * S, ax = (a % cols) * S;
  const std::size_t by = (b / cols) * S, bx = (b % cols) * S;
  for (std::size_t dy = 0; dy < S; ++dy)
    for (std::size_t dx = 0; dx < S; ++dx) {
      for (std::size_t c = 0; c < C; ++c)
        std::swap(out.image[(c * H + ay + dy) * W + ax + dx], out.image[(c * H + by + dy) * W + bx + dx]);
      std::swap(out.labels.at(ay + dy, ax + dx), out.labels.at(by + dy, bx + dx));
    }

  if (rand_unit(rng) < cfg.p_replace) {
    const bool first = rand_int(rng, 0, 2) == 0;
    replace_with_noise(out, first ? ay : by, first ? ax : bx, S, S, rng);
  }
  return out;
}

AugmentedSample random_shift(const Tensor& image, const LabelMap& labels,
                             const AugmentConfig& cfg, ShiftDirection direction, Rng& rng) {
  cfg.validate();
  check_inputs(image, labels, cfg.interval);
  AugmentedSample out{image, labels};
  const std::size_t S = cfg.interval, C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const bool horizontal = direction == ShiftDirection::kHorizontal;
  // Along: the axis the strip runs along; across: its S-pixel thickness.
  const std::size_t along = horizontal ? W : H, across = horizontal ? H : W;
  if (along <= S) return out;

  const auto start_across =
      static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(across / S))) * S;
  const auto length = static_cast<std::size_t>(
      rand_int(rng, static_cast<std::int64_t>(S), static_cast<std::int64_t>(along)));
  const auto start_along = static_cast<std::size_t>(
      rand_int(rng, 0, static_cast<std::int64_t>(along - length + 1)));
  const auto offset = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(S)));
  const bool towards_start = rand_int(rng, 0, 2) == 0;  // left / up
  const bool replace = rand_unit(rng) < cfg.p_replace;

  auto pixel = [&](std::size_t a, std::size_t j) {  // (across, along) -> (y, x)
    return horizontal ? std::pair{a, j} : std::pair{j, a};
  };
  for (std::size_t a = start_across; a < start_across + S; ++a)
    for (std::size_t j = 0; j < length; ++j) {
      const std::size_t src = towards_start ? (j + offset) % length : (j + length - offset) % length;
      const auto [dy, dx] = pixel(a, start_along + j);
      const auto [sy, sx] = pixel(a, start_along + src);
      for (std::size_t c = 0; c < C; ++c)
        out.image[(c * H + dy) * W + dx] = image[(c * H + sy) * W + sx];
      out.labels.at(dy, dx) = labels.at(sy, sx);
    }

  if (replace && offset > 0) {
    // The wrapped segment: the tail after a move towards the start, the head otherwise.
    const std::size_t seg_start = start_along + (towards_start ? length - offset : 0);
    if (horizontal)
      replace_with_noise(out, start_across, seg_start, S, offset, rng);
    else
      replace_with_noise(out, seg_start, start_across, offset, S, rng);
  }
  return out;
}

}  // namespace aisp
