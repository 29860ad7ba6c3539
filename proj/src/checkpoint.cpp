#include "aisp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "aisp/errors.hpp"

namespace aisp {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'A', 'I', 'S', 'P'};
constexpr std::uint8_t kFloat64 = 1;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void tensor(const std::string& name, const Tensor& t) {
    bytes(name);
    pod<std::uint8_t>(kFloat64);
    pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) pod<std::uint64_t>(d);
    out_.append(reinterpret_cast<const char*>(t.data().data()), t.numel() * sizeof(double));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename T>
  T pod(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(const char* what) {
    const auto n = pod<std::uint32_t>(what);
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  NamedTensor tensor() {
    NamedTensor t;
    t.name = bytes("tensor name");
    if (pod<std::uint8_t>("dtype") != kFloat64)
      throw FormatError("tensor '" + t.name + "' has an unsupported dtype");
    const auto rank = pod<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("tensor '" + t.name + "' has implausible rank");
    Shape shape;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = pod<std::uint64_t>("dims");
      if (d == 0 || d > (1ULL << 32)) throw FormatError("tensor '" + t.name + "' has a bad dim");
      shape.push_back(static_cast<std::size_t>(d));
      count *= shape.back();
    }
    need(count * sizeof(double), "tensor data");
    std::vector<double> data(count);
    std::memcpy(data.data(), in_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
    t.value = Tensor(std::move(shape), std::move(data));
    return t;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

ModelConfig parse_config_snapshot(const std::string& text) {
  ModelConfig config;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      if (!config.apply(key, value)) throw FormatError("unknown config key '" + key + "' in checkpoint");
    } catch (const ConfigError& e) {
      throw FormatError(std::string("bad config snapshot: ") + e.what());
    }
  }
  return config;
}

}  // namespace

Checkpoint make_checkpoint(const Model& model, const AdamState* optimizer, std::uint64_t iteration,
                           std::string rng_state) {
  Checkpoint ck;
  ck.config = model.config();
  ck.tensors = model.parameters();
  if (optimizer != nullptr) ck.optimizer = *optimizer;
  ck.iteration = iteration;
  ck.rng_state = std::move(rng_state);
  return ck;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  for (char c : kMagic) w.pod<char>(c);
  w.pod<std::uint16_t>(kCheckpointVersion);
  w.bytes(ck.config.to_text());
  w.pod<std::uint64_t>(ck.iteration);
  w.bytes(ck.rng_state);
  w.pod<std::uint8_t>(ck.optimizer ? 1 : 0);
  std::size_t count = ck.tensors.size();
  if (ck.optimizer) {
    if (ck.optimizer->first_moment.size() != ck.tensors.size())
      throw DimensionError("optimizer state does not match the parameter list");
    w.pod<std::uint64_t>(ck.optimizer->step);
    w.pod<double>(ck.optimizer->beta1);
    w.pod<double>(ck.optimizer->beta2);
    w.pod<double>(ck.optimizer->epsilon);
    count += 2 * ck.tensors.size();
  }
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(count));
  for (const auto& t : ck.tensors) w.tensor(t.name, t.value);
  if (ck.optimizer) {
    for (std::size_t i = 0; i < ck.tensors.size(); ++i)
      w.tensor("adam.m/" + ck.tensors[i].name, ck.optimizer->first_moment[i]);
    for (std::size_t i = 0; i < ck.tensors.size(); ++i)
      w.tensor("adam.v/" + ck.tensors[i].name, ck.optimizer->second_moment[i]);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  for (char c : kMagic)
    if (r.pod<char>("magic") != c) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.pod<std::uint16_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config = parse_config_snapshot(r.bytes("config"));
  ck.iteration = r.pod<std::uint64_t>("iteration");
  ck.rng_state = r.bytes("rng state");
  const bool has_opt = r.pod<std::uint8_t>("optimizer flag") != 0;
  AdamState opt;
  if (has_opt) {
    opt.step = r.pod<std::uint64_t>("adam step");
    opt.beta1 = r.pod<double>("adam beta1");
    opt.beta2 = r.pod<double>("adam beta2");
    opt.epsilon = r.pod<double>("adam epsilon");
  }
  const auto count = r.pod<std::uint32_t>("tensor count");
  std::map<std::string, Tensor> moments;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t = r.tensor();
    if (t.name.rfind("adam.", 0) == 0)
      moments.emplace(t.name, std::move(t.value));
    else
      ck.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint payload");
  if (has_opt) {
    for (const auto& t : ck.tensors) {
      const auto m = moments.find("adam.m/" + t.name), v = moments.find("adam.v/" + t.name);
      if (m == moments.end() || v == moments.end())
        throw FormatError("optimizer moments missing for '" + t.name + "'");
      opt.first_moment.push_back(m->second);
      opt.second_moment.push_back(v->second);
    }
    ck.optimizer = std::move(opt);
  }
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

void load_parameters(Model& model, const Checkpoint& checkpoint) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : checkpoint.tensors) by_name[t.name] = &t.value;
  for (const auto& p : model.parameters()) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw CompatibilityError("checkpoint has no tensor '" + p.name + "'");
    if (it->second->shape() != p.value.shape())
      throw CompatibilityError("tensor '" + p.name + "' is " + shape_str(it->second->shape()) +
                               " in the checkpoint but " + shape_str(p.value.shape()) +
                               " in the model");
  }
  if (by_name.size() != model.parameters().size())
    throw CompatibilityError("checkpoint holds tensors the model does not have");
  for (auto& p : model.parameters()) p.value = *by_name.at(p.name);
}

Model model_from_checkpoint(const Checkpoint& checkpoint) {
  Model model = Model::build(checkpoint.config, 0);
  load_parameters(model, checkpoint);
  return model;
}

std::optional<AdamState> optimizer_from_checkpoint(const Model& model, const Checkpoint& checkpoint) {
  if (!checkpoint.optimizer) return std::nullopt;
  // Moments are stored in checkpoint tensor order; realign to the model.
  std::map<std::string, std::size_t> order;
  for (std::size_t i = 0; i < checkpoint.tensors.size(); ++i) order[checkpoint.tensors[i].name] = i;
  AdamState state = *checkpoint.optimizer;
  state.first_moment.clear();
  state.second_moment.clear();
  for (const auto& p : model.parameters()) {
    const auto it = order.find(p.name);
    if (it == order.end()) throw CompatibilityError("optimizer state lacks '" + p.name + "'");
    state.first_moment.push_back(checkpoint.optimizer->first_moment[it->second]);
    state.second_moment.push_back(checkpoint.optimizer->second_moment[it->second]);
  }
  return state;
}

}  // namespace aisp
