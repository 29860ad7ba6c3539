// aisp: train, segment, evaluate and inspect superpixel models.
//
// Exit codes: 0 success, 1 user error (bad flags, config, files), 2 internal.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aisp/checkpoint.hpp"
#include "aisp/config.hpp"
#include "aisp/dataset.hpp"
#include "aisp/errors.hpp"
#include "aisp/evaluate.hpp"
#include "aisp/gradcheck.hpp"
#include "aisp/image_io.hpp"
#include "aisp/metrics.hpp"
#include "aisp/segment.hpp"
#include "aisp/trainer.hpp"

namespace fs = std::filesystem;
using namespace aisp;

namespace {

struct TrainArgs {
  std::string config, data, out, resume;
  std::optional<std::size_t> synthetic;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

struct SegmentArgs {
  std::string ckpt, image, out;
  std::size_t count = 0;
};

struct EvalArgs {
  std::string ckpt, data, out;
  std::vector<std::size_t> counts;
  std::size_t tol = kDefaultTolerance;
  bool no_timing = false;
};

struct ProposalArgs {
  std::string ckpt, image, out;
  double threshold = 0.5;
  std::size_t count = 0;
};

struct GendataArgs {
  std::size_t n = 0, size = 64, regions = 12;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  ExperimentConfig cfg = load_config(a.config);
  if (a.seed) cfg.train.seed = *a.seed;

  std::vector<SampleRecord> data;
  if (a.synthetic) {
    if (*a.synthetic == 0) throw ConfigError("--synthetic needs at least one sample");
    data = gen_synthetic({*a.synthetic, cfg.data.size, cfg.data.regions, cfg.data.noise_sigma, cfg.train.seed});
  } else {
    data = load_dataset(a.data);
    if (data.empty()) throw ConfigError("no samples in '" + a.data + "'");
  }

  Model model = Model::build(cfg.model, cfg.train.seed);
  TrainState state = TrainState::fresh(model);
  if (!a.resume.empty()) {
    const Checkpoint ck = load_checkpoint(a.resume);
    if (!(ck.config == cfg.model)) throw CompatibilityError("checkpoint config differs from --config");
    load_parameters(model, ck);
    if (auto opt = optimizer_from_checkpoint(model, ck)) state.optimizer = std::move(*opt);
    state.iteration = static_cast<std::size_t>(ck.iteration);
  }

  const fs::path parent = fs::path(a.out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  TrainOptions options;
  options.checkpoint_path = a.out;
  if (a.verbose)
    options.on_iteration = [](const LossRecord& r) {
      if (r.iter % 50 == 0)
        std::fprintf(stderr, "iter %zu loss %.5f ce %.5f pos %.5f bpl %.5f lr %.2e\n", r.iter, r.loss, r.ce,
                     r.pos, r.bpl, r.lr);
    };
  const auto trace = train(model, data, cfg.train, state, options);
  const fs::path csv = fs::path(a.out).parent_path() / "loss.csv";
  write_file(csv, loss_csv(trace));
  std::printf("iterations %zu\n", state.iteration);
  if (!trace.empty()) std::printf("final_loss %.6f\n", trace.back().loss);
  return 0;
}

Model load_model(const std::string& path) { return model_from_checkpoint(load_checkpoint(path)); }

std::size_t native_count(const Tensor& image, std::size_t interval) {
  const auto cells = [&](std::size_t side) { return std::max<std::size_t>(1, (side + interval / 2) / interval); };
  return cells(image.dim(1)) * cells(image.dim(2));
}

int cmd_segment(const SegmentArgs& a) {
  const Model model = load_model(a.ckpt);
  const Tensor image = read_ppm(a.image);
  const SuperpixelSegmentation seg = segment_image(model, image, a.count);
  write_pgm_labels(a.out + ".labels.pgm", seg);
  write_ppm(a.out + ".overlay.ppm", overlay_boundaries(image, seg));
  std::printf("%zu\n", seg.count);
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  const Model model = load_model(a.ckpt);
  const auto data = load_dataset(a.data);
  if (data.empty()) throw ConfigError("no samples in '" + a.data + "'");
  const auto rows = evaluate_counts(&model, data, a.counts, a.tol);
  write_eval_outputs(a.out, rows, !a.no_timing);
  std::cout << metrics_csv(rows, !a.no_timing);
  return 0;
}

int cmd_proposals(const ProposalArgs& a) {
  if (a.threshold < 0.0 || a.threshold > 1.0) throw ConfigError("--threshold must lie in [0, 1]");
  const Model model = load_model(a.ckpt);
  const Tensor image = read_ppm(a.image);
  const std::size_t count = a.count > 0 ? a.count : native_count(image, model.config().interval);
  const SuperpixelSegmentation seg = segment_image(model, image, count);
  const ProposalSet proposals = merge_proposals(seg, image, a.threshold);
  write_pgm_labels(a.out + ".labels.pgm", proposals.labels);
  write_ppm(a.out + ".overlay.ppm", overlay_boundaries(image, proposals.labels));
  std::printf("superpixels %zu\nregions %zu\n", seg.count, proposals.count);
  return 0;
}

int cmd_gradcheck(const std::string& scope) {
  bool ok = true;
  for (const auto& r : run_gradchecks(scope)) {
    std::printf("%-18s max_rel_error %.3e checked %zu %s\n", r.name.c_str(), r.max_rel_error, r.checked,
                r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? 0 : 1;
}

int cmd_gendata(const GendataArgs& a) {
  if (a.n == 0) throw ConfigError("--n must be positive");
  save_dataset(a.out, gen_synthetic({a.n, a.size, a.regions, 0.03, a.seed}));
  std::printf("%zu\n", a.n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Superpixel segmentation with association implantation"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes the checkpoint and loss.csv beside it");
  train_cmd->add_option("--config", train_args.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  auto* data_opt = train_cmd->add_option("--data", train_args.data, "Dataset directory")->check(CLI::ExistingDirectory);
  auto* synth_opt = train_cmd->add_option("--synthetic", train_args.synthetic, "Generate N synthetic samples instead");
  data_opt->excludes(synth_opt);
  train_cmd->add_option("--out", train_args.out, "Checkpoint path")->required();
  train_cmd->add_option("--seed", train_args.seed, "Override the config seed");
  train_cmd->add_option("--resume", train_args.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_flag("--verbose", train_args.verbose, "Progress on stderr");

  SegmentArgs seg_args;
  auto* seg_cmd = app.add_subcommand("segment", "Segment one image; writes PREFIX.labels.pgm and PREFIX.overlay.ppm");
  seg_cmd->add_option("--ckpt", seg_args.ckpt, "Checkpoint")->required();
  seg_cmd->add_option("--image", seg_args.image, "Input PPM")->required();
  seg_cmd->add_option("--n-superpixels", seg_args.count, "Requested superpixel count")->required()->check(CLI::PositiveNumber);
  seg_cmd->add_option("--out", seg_args.out, "Output prefix")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "ASA/BR/BP sweep; writes metrics.csv, asa.svg, br_bp.svg");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", eval_args.data, "Dataset directory")->required();
  eval_cmd->add_option("--counts", eval_args.counts, "Superpixel counts, comma separated")
      ->required()
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", eval_args.out, "Output directory")->required();
  eval_cmd->add_option("--tol", eval_args.tol, "Boundary tolerance in pixels")->capture_default_str();
  eval_cmd->add_flag("--no-timing", eval_args.no_timing, "Write runtime_ms as 0 for reproducible output");

  ProposalArgs prop_args;
  auto* prop_cmd = app.add_subcommand("proposals", "Merge superpixels into object proposals");
  prop_cmd->add_option("--ckpt", prop_args.ckpt, "Checkpoint")->required();
  prop_cmd->add_option("--image", prop_args.image, "Input PPM")->required();
  prop_cmd->add_option("--threshold", prop_args.threshold, "Merge when similarity exceeds this")->required();
  prop_cmd->add_option("--n-superpixels", prop_args.count, "Superpixel count (default: native grid)");
  prop_cmd->add_option("--out", prop_args.out, "Output prefix")->required();

  std::string scope = "all";
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::vector<std::string> scopes = gradcheck_scopes();
  scopes.insert(scopes.begin(), "all");
  grad_cmd->add_option("--scope", scope, "all or one operation")->check(CLI::IsMember(scopes))->capture_default_str();

  GendataArgs gen_args;
  auto* gen_cmd = app.add_subcommand("gendata", "Write a synthetic Voronoi dataset");
  gen_cmd->add_option("--n", gen_args.n, "Number of samples")->required();
  gen_cmd->add_option("--size", gen_args.size, "Image side")->capture_default_str();
  gen_cmd->add_option("--regions", gen_args.regions, "Voronoi regions per image")->capture_default_str();
  gen_cmd->add_option("--seed", gen_args.seed, "Seed")->capture_default_str();
  gen_cmd->add_option("--out", gen_args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) {
      if (train_args.data.empty() && !train_args.synthetic) throw ConfigError("give --data or --synthetic");
      return cmd_train(train_args);
    }
    if (*seg_cmd) return cmd_segment(seg_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*prop_cmd) return cmd_proposals(prop_args);
    if (*grad_cmd) return cmd_gradcheck(scope);
    if (*gen_cmd) return cmd_gendata(gen_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CompatibilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
