#include "aisp/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "aisp/errors.hpp"

namespace aisp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long n = -1;
  try {
    n = std::stoll(v, &pos);
  } catch (const std::exception&) {
  }
  if (pos != v.size() || n < 0) throw ConfigError("'" + key + "' expects a non-negative integer");
  return static_cast<std::size_t>(n);
}

double to_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = std::nan("");
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
  }
  if (pos != v.size() || !std::isfinite(d)) throw ConfigError("'" + key + "' expects a finite number");
  return d;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true or false");
}

bool apply_train(TrainConfig& t, const std::string& k, const std::string& v) {
  if (k == "lr") t.lr = to_real(k, v);
  else if (k == "batch") t.batch = to_size(k, v);
  else if (k == "total_iters") t.total_iters = to_size(k, v);
  else if (k == "stage1_iters") t.stage1_iters = to_size(k, v);
  else if (k == "lr_halving_period") t.lr_halving_period = to_size(k, v);
  else if (k == "lambda") t.lambda = to_real(k, v);
  else if (k == "alpha") t.alpha = to_real(k, v);
  else if (k == "crop") t.crop = to_size(k, v);
  else if (k == "seed") t.seed = to_size(k, v);
  else if (k == "max_patches") t.max_patches = to_size(k, v);
  else if (k == "augment_prob") t.augment_prob = to_real(k, v);
  else if (k == "checkpoint_every") t.checkpoint_every = to_size(k, v);
  else if (k == "p_replace") t.augment.p_replace = to_real(k, v);
  else if (k == "shuffle") t.augment.shuffle = to_bool(k, v);
  else if (k == "shift") t.augment.shift = to_bool(k, v);
  else return false;
  return true;
}

bool apply_data(DataConfig& d, const std::string& k, const std::string& v) {
  if (k == "size") d.size = to_size(k, v);
  else if (k == "regions") d.regions = to_size(k, v);
  else if (k == "noise_sigma") d.noise_sigma = to_real(k, v);
  else return false;
  return true;
}

}  // namespace

TrainConfig TrainConfig::paper() {
  TrainConfig t;
  t.lr = 8e-5;
  t.batch = 16;
  t.total_iters = 4000;
  t.stage1_iters = 3000;
  t.lr_halving_period = 2000;
  t.crop = 208;
  t.augment.interval = 16;
  return t;
}

double TrainConfig::lr_at(std::size_t iteration) const {
  if (lr_halving_period == 0) return lr;
  return lr * std::ldexp(1.0, -static_cast<int>(iteration / lr_halving_period));
}

void TrainConfig::validate(std::size_t interval) const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (stage1_iters > total_iters) throw ConfigError("stage1_iters exceeds total_iters");
  if (crop == 0 || crop % interval != 0)
    throw ConfigError("crop " + std::to_string(crop) + " is not a multiple of the interval " +
                      std::to_string(interval));
  if (lambda < 0.0 || alpha < 0.0) throw ConfigError("loss weights must be non-negative");
  if (max_patches == 0) throw ConfigError("max_patches must be at least 1");
  if (augment_prob < 0.0 || augment_prob > 1.0) throw ConfigError("augment_prob must lie in [0, 1]");
  if (augment.interval != interval) throw ConfigError("augmentation interval differs from the model interval");
  augment.validate();
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate(model.interval);
  if (data.size % model.interval != 0) throw ConfigError("data size is not a multiple of the interval");
  if (data.size < train.crop) throw ConfigError("crop is larger than the data size");
  if (data.regions < 2) throw ConfigError("regions must be at least 2");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "# model\n" << model.to_text();
  const auto& t = train;
  os << "# training\n"
     << "lr = " << t.lr << "\nbatch = " << t.batch << "\ntotal_iters = " << t.total_iters
     << "\nstage1_iters = " << t.stage1_iters << "\nlr_halving_period = " << t.lr_halving_period
     << "\nlambda = " << t.lambda << "\nalpha = " << t.alpha << "\ncrop = " << t.crop
     << "\nseed = " << t.seed << "\nmax_patches = " << t.max_patches
     << "\naugment_prob = " << t.augment_prob << "\ncheckpoint_every = " << t.checkpoint_every
     << "\np_replace = " << t.augment.p_replace << "\nshuffle = " << (t.augment.shuffle ? "true" : "false")
     << "\nshift = " << (t.augment.shift ? "true" : "false") << "\n";
  os << "# synthetic data\n"
     << "size = " << data.size << "\nregions = " << data.regions << "\nnoise_sigma = " << data.noise_sigma
     << "\n";
  return os.str();
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  for (std::size_t no = 1; std::getline(is, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + "expected 'key = value'");
    try {
      if (!cfg.model.apply(key, value) && !apply_train(cfg.train, key, value) &&
          !apply_data(cfg.data, key, value))
        throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.train.augment.interval = cfg.model.interval;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace aisp
