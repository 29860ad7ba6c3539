#include "doctest.h"

#include <filesystem>
#include <set>

#include "aisp/association.hpp"
#include "aisp/checkpoint.hpp"
#include "aisp/config.hpp"
#include "aisp/dataset.hpp"
#include "aisp/errors.hpp"
#include "aisp/image_io.hpp"
#include "aisp/resize.hpp"
#include "aisp/trainer.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace aisp;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("aisp_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Tiny schedule that still crosses the stage boundary.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.model.widths = {4, 4, 4};
  cfg.model.embed_dim = 4;
  cfg.model.compress_mid = 4;
  cfg.train.batch = 2;
  cfg.train.crop = 16;
  cfg.train.total_iters = 6;
  cfg.train.stage1_iters = 3;
  cfg.train.lr_halving_period = 4;
  cfg.train.checkpoint_every = 3;
  cfg.data.size = 24;
  return cfg;
}

std::vector<SampleRecord> tiny_data() { return gen_synthetic({6, 24, 4, 0.03, 5}); }

}  // namespace

TEST_SUITE("synthetic") {
  TEST_CASE("two regions give two classes") {
    const auto s = synthetic_sample({1, 64, 2, 0.03, 3}, 0);
    CHECK(s.labels.num_classes == 2);
    CHECK(std::set<std::int32_t>(s.labels.ids.begin(), s.labels.ids.end()).size() == 2);
    CHECK(oracle::components_per_id(s.labels).size() == 2);
  }

  TEST_CASE("noise-free regions are flat") {
    const auto s = synthetic_sample({1, 32, 5, 0.0, 4}, 0);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 32 * 32; ++p)
        for (std::size_t q = p + 1; q < 32 * 32; q += 7)
          if (s.labels.ids[p] == s.labels.ids[q]) CHECK(s.image[c * 1024 + p] == s.image[c * 1024 + q]);
  }

  TEST_CASE("regeneration is bit identical") {
    const auto a = gen_synthetic({3, 32, 6, 0.03, 89}), b = gen_synthetic({3, 32, 6, 0.03, 89});
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a[i].image == b[i].image);
      CHECK(a[i].labels == b[i].labels);
      CHECK(a[i].id == b[i].id);
      a[i].labels.validate();
      for (double v : a[i].image.vec()) CHECK((v >= 0.0 && v <= 1.0));
    }
  }
}

TEST_SUITE("image_io") {
  TEST_CASE("ppm round trip on the 8-bit lattice") {
    Tensor img({3, 5, 7});
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<double>((i * 37) % 256) / 255.0;
    const Tensor back = decode_ppm(encode_ppm(img));
    CHECK(testing_util::max_abs_diff(back, img) < 1e-15);
    CHECK_THROWS_AS(decode_ppm("P3\n1 1\n255\n0 0 0"), FormatError);
    CHECK_THROWS_AS(decode_ppm("P6\n4 4\n255\nabc"), FormatError);
  }

  TEST_CASE("pgm labels round trip with 16-bit ids") {
    LabelImage l(3, 4);
    for (std::size_t i = 0; i < 12; ++i) l.ids[i] = static_cast<std::int32_t>(i * 3000);
    const LabelMap back = decode_pgm_labels(encode_pgm_labels(l));
    CHECK(back.ids == l.ids);
    CHECK(back.num_classes == 33001);
  }

  TEST_CASE("resize") {
    const Tensor img = testing_util::random_tensor({3, 8, 8}, 1, 0, 1);
    CHECK(testing_util::max_abs_diff(resize_bilinear(img, 8, 8), img) < 1e-15);
    const Tensor flat = resize_bilinear(Tensor({3, 5, 5}, 0.3), 9, 13);
    for (double v : flat.vec()) CHECK(std::abs(v - 0.3) < 1e-15);
    LabelImage l(2, 2);
    l.ids = {1, 2, 3, 4};
    const LabelImage up = resize_nearest(l, 4, 4);
    CHECK(up.at(0, 0) == 1);
    CHECK(up.at(0, 3) == 2);
    CHECK(up.at(3, 0) == 3);
    CHECK(up.at(3, 3) == 4);
  }
}

TEST_SUITE("dataset") {
  TEST_CASE("empty directory") { CHECK(load_dataset(fresh_dir("empty")).empty()); }

  TEST_CASE("single pair and round trip") {
    const auto dir = fresh_dir("single");
    const auto data = gen_synthetic({1, 16, 3, 0.0, 2});
    save_dataset(dir, data);
    const auto back = load_dataset(dir);
    REQUIRE(back.size() == 1);
    CHECK(back[0].id == data[0].id);
    CHECK(back[0].labels.ids == data[0].labels.ids);
    CHECK(back[0].image.shape() == data[0].image.shape());
    CHECK(testing_util::max_abs_diff(back[0].image, data[0].image) <= 0.5 / 255.0 + 1e-12);
  }

  TEST_CASE("lexicographic order") {
    const auto dir = fresh_dir("order");
    auto data = gen_synthetic({3, 16, 3, 0.0, 2});
    data[0].id = "b";
    data[1].id = "a";
    data[2].id = "c";
    save_dataset(dir, data);
    const auto back = load_dataset(dir);
    CHECK(back[0].id == "a");
    CHECK(back[1].id == "b");
    CHECK(back[2].id == "c");
  }

  TEST_CASE("mismatched sizes name both files") {
    const auto dir = fresh_dir("mismatch");
    write_ppm(dir / "x.ppm", Tensor({3, 4, 4}, 0.5));
    write_pgm_labels(dir / "x.labels.pgm", LabelImage(4, 5));
    try {
      load_dataset(dir);
      FAIL("expected an error");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("x.ppm") != std::string::npos);
      CHECK(msg.find("x.labels.pgm") != std::string::npos);
    }
  }

  TEST_CASE("unpaired file is an error") {
    const auto dir = fresh_dir("unpaired");
    write_ppm(dir / "lonely.ppm", Tensor({3, 4, 4}, 0.5));
    CHECK_THROWS_AS(load_dataset(dir), FormatError);
  }
}

TEST_SUITE("config") {
  TEST_CASE("shipped desk config parses") {
    const auto cfg = load_config(fs::path(AISP_SOURCE_DIR) / "configs" / "desk.cfg");
    CHECK(cfg.model == ModelConfig::desk());
    CHECK(cfg.train.total_iters == 600);
    CHECK(cfg.train.stage1_iters == 450);
    CHECK(cfg.train.lambda == doctest::Approx(0.003 / 16));
    const auto paper = load_config(fs::path(AISP_SOURCE_DIR) / "configs" / "paper.cfg");
    CHECK(paper.model == ModelConfig::paper());
  }

  TEST_CASE("text round trip") {
    ExperimentConfig cfg = tiny_config();
    cfg.train.augment.interval = cfg.model.interval;
    const auto back = parse_config(cfg.to_text());
    CHECK(back.to_text() == cfg.to_text());
  }

  TEST_CASE("errors carry the line") {
    try {
      parse_config("# header\nlr = 1e-3\nbogus = 4\n", "x.cfg");
      FAIL("expected an error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("x.cfg:3:") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("lr = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("lr 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("total_iters = 10\nstage1_iters = 20\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("crop = 60\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/aisp.cfg"), ConfigError);
  }

  TEST_CASE("full-size learning-rate schedule") {
    const TrainConfig t = TrainConfig::paper();
    for (std::size_t i = 0; i < 4000; i += 111) CHECK(t.lr_at(i) == (i < 2000 ? 8e-5 : 4e-5));
    CHECK(t.lr_at(1999) == 8e-5);
    CHECK(t.lr_at(2000) == 4e-5);
  }
}

TEST_SUITE("trainer") {
  TEST_CASE("same seed gives identical traces") {
    const auto cfg = tiny_config();
    const auto data = tiny_data();
    std::vector<std::vector<LossRecord>> traces;
    for (int run = 0; run < 2; ++run) {
      Model m = Model::build(cfg.model, cfg.train.seed);
      TrainState st = TrainState::fresh(m);
      traces.push_back(train(m, data, cfg.train, st));
    }
    CHECK(loss_csv(traces[0]) == loss_csv(traces[1]));
    CHECK(traces[0].size() == 6);
    CHECK(traces[0][2].bpl == 0.0);
    CHECK(traces[0][4].bpl > 0.0);
    CHECK(traces[0][4].lr == cfg.train.lr / 2);
  }

  TEST_CASE("resume matches an uninterrupted run") {
    const auto cfg = tiny_config();
    const auto data = tiny_data();
    Model full = Model::build(cfg.model, cfg.train.seed);
    TrainState fs_state = TrainState::fresh(full);
    const auto straight = train(full, data, cfg.train, fs_state);

    const auto dir = fresh_dir("resume");
    TrainConfig half = cfg.train;
    half.total_iters = 3;
    Model first = Model::build(cfg.model, cfg.train.seed);
    TrainState st = TrainState::fresh(first);
    train(first, data, half, st, {dir / "m.ckpt", {}});

    const Checkpoint ck = load_checkpoint(dir / "m.ckpt");
    CHECK(ck.iteration == 3);
    Model resumed = model_from_checkpoint(ck);
    TrainState rs{*optimizer_from_checkpoint(resumed, ck), ck.iteration};
    const auto rest = train(resumed, data, cfg.train, rs);
    REQUIRE(rest.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(rest[i].loss == straight[i + 3].loss);
    for (std::size_t i = 0; i < full.parameters().size(); ++i)
      CHECK(resumed.parameters()[i].value == full.parameters()[i].value);
  }

  TEST_CASE("zero boundary weight leaves the task loss") {
    auto cfg = tiny_config();
    cfg.train.alpha = 0.0;
    const auto data = tiny_data();
    Model m = Model::build(cfg.model, 3);
    TrainState st = TrainState::fresh(m);
    for (std::size_t it = 0; it < 5; ++it) {
      const Batch batch = assemble_batch(data, cfg.train, it);
      const Tensor q = m.infer(batch.images);
      const auto expect = oracle::task_loss(q, batch.labels, 8, cfg.train.lambda);
      const LossRecord rec = train_step(m, batch, cfg.train, st);
      CHECK(std::abs(rec.loss - expect.total) < 1e-10);
    }
  }

  TEST_CASE("non-finite loss names the term") {
    auto cfg = tiny_config();
    auto data = tiny_data();
    for (auto& s : data) s.image[0] = NAN;
    for (auto& s : data) std::fill(s.image.data().begin(), s.image.data().end(), NAN);
    Model m = Model::build(cfg.model, 3);
    TrainState st = TrainState::fresh(m);
    try {
      train(m, data, cfg.train, st);
      FAIL("expected a numeric error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("cross-entropy") != std::string::npos);
    }
  }

  TEST_CASE("batch assembly is deterministic") {
    const auto cfg = tiny_config();
    const auto data = tiny_data();
    const Batch a = assemble_batch(data, cfg.train, 7), b = assemble_batch(data, cfg.train, 7);
    CHECK(a.images == b.images);
    CHECK(a.labels[1] == b.labels[1]);
    CHECK(a.images != assemble_batch(data, cfg.train, 8).images);
  }
}
