#include "aisp/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "aisp/errors.hpp"

namespace aisp {

namespace {

struct Header {
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t offset = 0;  // first byte of the raster
};

// Parses "Px W H MAX" with comments, stopping after the single whitespace byte
// that precedes the raster.
Header parse_header(const std::string& bytes, const char* magic, const std::string& source) {
  if (bytes.size() < 2 || bytes.compare(0, 2, magic) != 0)
    throw FormatError(source + ": expected a binary " + magic + " netpbm file");
  std::size_t pos = 2;
  std::size_t fields[3] = {0, 0, 0};
  for (auto& field : fields) {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      field = field * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (field > 1u << 24) throw FormatError(source + ": header value out of range");
      ++pos;
    }
    if (pos == start) throw FormatError(source + ": malformed header");
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError(source + ": malformed header");
  Header h{fields[0], fields[1], fields[2], pos + 1};
  if (h.width == 0 || h.height == 0) throw FormatError(source + ": zero image dimension");
  if (h.maxval == 0 || h.maxval > 65535) throw FormatError(source + ": bad maxval");
  return h;
}

}  // namespace

Tensor decode_ppm(const std::string& bytes, const std::string& source) {
  const Header h = parse_header(bytes, "P6", source);
  if (h.maxval > 255) throw FormatError(source + ": only 8-bit PPM is supported");
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.offset < 3 * n) throw FormatError(source + ": truncated raster");
  Tensor img(Shape{3, h.height, h.width});
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + h.offset);
  const double scale = 1.0 / static_cast<double>(h.maxval);
  auto d = img.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) d[c * n + i] = raster[3 * i + c] * scale;
  return img;
}

std::string encode_ppm(const Tensor& image) {
  require_rank(image, 3, "PPM image");
  if (image.dim(0) != 3) throw DimensionError("PPM image needs 3 channels, got " + shape_str(image.shape()));
  const std::size_t H = image.dim(1), W = image.dim(2), n = H * W;
  std::string out = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  const std::size_t head = out.size();
  out.resize(head + 3 * n);
  const auto d = image.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(d[c * n + i], 0.0, 1.0);
      out[head + 3 * i + c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  return out;
}

LabelMap decode_pgm_labels(const std::string& bytes, const std::string& source) {
  const Header h = parse_header(bytes, "P5", source);
  const std::size_t n = h.width * h.height;
  const std::size_t bps = h.maxval > 255 ? 2 : 1;
  if (bytes.size() - h.offset < bps * n) throw FormatError(source + ": truncated raster");
  LabelMap labels(h.height, h.width, 1);
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + h.offset);
  std::int32_t top = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t v = bps == 2 ? (raster[2 * i] << 8) | raster[2 * i + 1] : raster[i];
    labels.ids[i] = v;
    top = std::max(top, v);
  }
  labels.num_classes = top + 1;
  return labels;
}

std::string encode_pgm_labels(const LabelImage& labels) {
  std::string out =
      "P5\n" + std::to_string(labels.width) + " " + std::to_string(labels.height) + "\n65535\n";
  const std::size_t head = out.size();
  out.resize(head + 2 * labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto v = labels.ids[i];
    if (v < 0 || v > 65535) throw FormatError("label id " + std::to_string(v) + " does not fit 16 bits");
    out[head + 2 * i] = static_cast<char>(v >> 8);
    out[head + 2 * i + 1] = static_cast<char>(v & 0xff);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Tensor read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path), path.string()); }
void write_ppm(const std::filesystem::path& path, const Tensor& image) { write_file(path, encode_ppm(image)); }
LabelMap read_pgm_labels(const std::filesystem::path& path) {
  return decode_pgm_labels(read_file(path), path.string());
}
void write_pgm_labels(const std::filesystem::path& path, const LabelImage& labels) {
  write_file(path, encode_pgm_labels(labels));
}

}  // namespace aisp
