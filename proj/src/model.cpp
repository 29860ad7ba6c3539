#include "aisp/model.hpp"

#include <cmath>
#include <sstream>

#include "aisp/errors.hpp"
#include "aisp/ops.hpp"
#include "aisp/random.hpp"

namespace aisp {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.interval = 16;
  c.widths = {32, 64, 128, 256};
  c.embed_dim = 16;
  c.compress_mid = 64;
  c.patch_size = 5;
  return c;
}

std::size_t ModelConfig::levels() const {
  std::size_t l = 0;
  for (std::size_t s = interval; s > 1; s >>= 1) ++l;
  return l;
}

void ModelConfig::validate() const {
  if (interval < 2 || (interval & (interval - 1)) != 0)
    throw ConfigError("interval must be a power of two >= 2, got " + std::to_string(interval));
  if (widths.size() != levels())
    throw ConfigError("interval " + std::to_string(interval) + " needs " +
                      std::to_string(levels()) + " encoder widths, got " +
                      std::to_string(widths.size()));
  for (auto w : widths)
    if (w == 0) throw ConfigError("encoder widths must be positive");
  if (embed_dim == 0 || compress_mid == 0 || in_channels == 0)
    throw ConfigError("channel counts must be positive");
  if (patch_size < 3 || patch_size % 2 == 0) throw ConfigError("patch_size must be odd and >= 3");
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("activation slope must lie in (0, 1)");
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != value.size() || v < 0)
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
  return static_cast<std::size_t>(v);
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != value.size()) throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + value + "'");
}

}  // namespace

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "interval = " << interval << "\n"
     << "widths = " << join(widths) << "\n"
     << "embed_dim = " << embed_dim << "\n"
     << "compress_mid = " << compress_mid << "\n"
     << "patch_size = " << patch_size << "\n"
     << "variant = " << variant_name(variant) << "\n"
     << "implant = " << (implant ? "true" : "false") << "\n"
     << "slope = " << slope << "\n"
     << "instance_norm = " << (instance_norm ? "true" : "false") << "\n"
     << "in_channels = " << in_channels << "\n";
  return os.str();
}

bool ModelConfig::apply(const std::string& key, const std::string& value) {
  if (key == "interval") {
    interval = parse_size(key, value);
  } else if (key == "widths") {
    widths.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
      widths.push_back(parse_size(key, b == std::string::npos ? "" : item.substr(b, e - b + 1)));
    }
  } else if (key == "embed_dim") {
    embed_dim = parse_size(key, value);
  } else if (key == "compress_mid") {
    compress_mid = parse_size(key, value);
  } else if (key == "patch_size") {
    patch_size = parse_size(key, value);
  } else if (key == "variant") {
    variant = parse_variant(value);
  } else if (key == "implant") {
    implant = parse_bool(key, value);
  } else if (key == "instance_norm") {
    instance_norm = parse_bool(key, value);
  } else if (key == "slope") {
    slope = parse_real(key, value);
  } else if (key == "in_channels") {
    in_channels = parse_size(key, value);
  } else {
    return false;
  }
  return true;
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model(config);
  Rng rng = derive_rng(seed, 0x6d6f64656cULL);

  // Variance-preserving bound for leaky activations; with a plain 1/fan_in
  // bound the signal fades layer by layer and only a constant output is learnable.
  const double gain = 6.0 / (1.0 + config.slope * config.slope);
  auto add_conv = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t k) {
    const double a = std::sqrt(gain / static_cast<double>(in * k * k));
    model.params_.push_back({name + ".w", Tensor::uniform(Shape{out, in, k, k}, -a, a, rng)});
    model.params_.push_back({name + ".b", Tensor(Shape{out}, 0.0)});
  };
  auto add_up = [&](const std::string& name, std::size_t in, std::size_t out) {
    const double a = std::sqrt(gain / static_cast<double>(in));
    model.params_.push_back({name + ".w", Tensor::uniform(Shape{in, out, 2, 2}, -a, a, rng)});
    model.params_.push_back({name + ".b", Tensor(Shape{out}, 0.0)});
  };

  const std::size_t L = config.levels();
  const auto& wd = config.widths;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t in = l == 0 ? config.in_channels : wd[l - 1];
    add_conv("enc" + std::to_string(l) + ".conv1", in, wd[l], 3);
    add_conv("enc" + std::to_string(l) + ".conv2", wd[l], wd[l], 3);
  }
  std::size_t in = wd[L - 1];
  for (std::size_t i = 0; i < L; ++i) {
    const bool last = i + 1 == L;
    const std::size_t out = last ? config.embed_dim : wd[L - 2 - i];
    const std::size_t skip = last ? 0 : wd[L - 1 - i];
    add_up("dec" + std::to_string(i) + ".up", in, out);
    add_conv("dec" + std::to_string(i) + ".conv", out + skip, out, 3);
    in = out;
  }
  const std::size_t D = config.embed_dim;
  if (config.implant) {
    add_conv("compress.conv1", wd[L - 1], config.compress_mid, 3);
    add_conv("compress.conv2", config.compress_mid, D, 3);
    add_conv("implant", D, D, 3);
    // The implanted cell embeddings start at zero and grow only as far as the
    // loss rewards them; a random start leaves per-cell offsets the head must unlearn.
    Tensor& cell_out = model.params_[model.params_.size() - 4].value;
    cell_out = Tensor(cell_out.shape(), 0.0);
  } else {
    add_conv("plain", D, D, 3);
  }
  add_conv("head.conv1", D, D, 3);
  add_conv("head.conv2", D, 9, 3);

  for (std::size_t i = 0; i < model.params_.size(); ++i) model.index_[model.params_[i].name] = i;
  return model;
}

std::size_t Model::index_of(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw IndexError("no parameter named '" + name + "'");
  return it->second;
}

const Tensor& Model::parameter(const std::string& name) const { return params_[index_of(name)].value; }
Tensor& Model::parameter(const std::string& name) { return params_[index_of(name)].value; }

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

ForwardPass Model::forward(Graph& graph, const Tensor& images, const ForwardOptions& options) const {
  require_rank(images, 4, "model input");
  if (images.dim(1) != config_.in_channels)
    throw ConfigError("model expects " + std::to_string(config_.in_channels) + " input channels, got " +
                      std::to_string(images.dim(1)));
  const GridSpec grid = GridSpec::create(images.dim(2), images.dim(3), config_.interval);

  ForwardPass pass;
  for (const auto& p : params_)
    pass.params.push_back(options.requires_grad ? graph.parameter(p.value) : graph.constant(p.value));
  auto param = [&](const std::string& name) { return pass.params[index_of(name)]; };
  const double slope = config_.slope;
  auto conv_act = [&](Var x, const std::string& name) {
    Var c = ops::conv2d(x, param(name + ".w"), param(name + ".b"));
    if (config_.instance_norm) c = ops::instance_norm(c);
    return ops::leaky_relu(c, slope);
  };

  const std::size_t L = config_.levels();
  Var x = graph.constant(images);
  std::vector<Var> skips;
  for (std::size_t l = 0; l < L; ++l) {
    const std::string p = "enc" + std::to_string(l);
    x = conv_act(conv_act(x, p + ".conv1"), p + ".conv2");
    skips.push_back(x);
    x = ops::max_pool2(x);
  }
  pass.superpixel = x;

  for (std::size_t i = 0; i < L; ++i) {
    const std::string p = "dec" + std::to_string(i);
    x = ops::leaky_relu(ops::conv_transpose2d(x, param(p + ".up.w"), param(p + ".up.b")), slope);
    // The final stage has no skip connection so the prediction path stays clean.
    if (i + 1 < L) x = ops::concat_channels(x, skips[L - 1 - i]);
    x = conv_act(x, p + ".conv");
  }
  pass.embedding = x;

  if (config_.implant) {
    const CompressionLayers compress{param("compress.conv1.w"), param("compress.conv1.b"),
                                     param("compress.conv2.w"), param("compress.conv2.b")};
    pass.cell_embedding = compress_channels(pass.superpixel, compress, slope);
    if (options.zero_cell_embedding)
      pass.cell_embedding = graph.constant(Tensor(pass.cell_embedding.shape(), 0.0));
    pass.fused = implant_fuse(pass.embedding, pass.cell_embedding, param("implant.w"),
                              param("implant.b"), grid, config_.variant);
  } else {
    pass.fused = ops::conv2d(pass.embedding, param("plain.w"), param("plain.b"));
  }
  x = ops::leaky_relu(pass.fused, slope);
  x = conv_act(x, "head.conv1");
  x = ops::conv2d(x, param("head.conv2.w"), param("head.conv2.b"));
  pass.q = ops::softmax_channels(x);
  return pass;
}

Tensor Model::infer(const Tensor& images) const {
  Graph graph;
  return forward(graph, images).q.value();
}

}  // namespace aisp
