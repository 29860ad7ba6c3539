#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "aisp/checkpoint.hpp"
#include "aisp/errors.hpp"
#include "aisp/model.hpp"
#include "helpers.hpp"

using namespace aisp;
using testing_util::random_tensor;
using testing_util::max_abs_diff;

namespace {

// Position-weighted sum; sensitive to any permutation or value change.
double digest(const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += t[i] * static_cast<double>(i % 97 + 1);
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("aisp_test_" + name);
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("desk shapes") {
    const Model m = Model::build(ModelConfig::desk(), 1);
    Graph g;
    const auto pass = m.forward(g, random_tensor({1, 3, 64, 64}, 1, 0, 1));
    CHECK(pass.superpixel.shape() == Shape{1, 64, 8, 8});
    CHECK(pass.embedding.shape() == Shape{1, 8, 64, 64});
    CHECK(pass.q.shape() == Shape{1, 9, 64, 64});
    CHECK(pass.cell_embedding.shape() == Shape{1, 8, 8, 8});
  }

  TEST_CASE("same seed gives identical parameters") {
    const Model a = Model::build(ModelConfig::desk(), 42), b = Model::build(ModelConfig::desk(), 42);
    const Model c = Model::build(ModelConfig::desk(), 43);
    REQUIRE(a.parameters().size() == b.parameters().size());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(a.parameters()[i].value == b.parameters()[i].value);
    CHECK(a.parameters()[0].value != c.parameters()[0].value);
  }

  TEST_CASE("association map is normalized") {
    const Model m = Model::build(ModelConfig::desk(), 3);
    const Tensor q = m.infer(random_tensor({2, 3, 32, 40}, 4, 0, 1));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 40; ++x) {
          double s = 0.0;
          for (std::size_t t = 0; t < 9; ++t) {
            CHECK(q.at(n, t, y, x) >= 0.0);
            s += q.at(n, t, y, x);
          }
          CHECK(std::abs(s - 1.0) < 1e-12);
        }
  }

  TEST_CASE("batch items are independent") {
    const Model m = Model::build(ModelConfig::desk(), 5);
    const Tensor one = random_tensor({1, 3, 16, 16}, 6, 0, 1);
    Tensor two({2, 3, 16, 16});
    for (std::size_t i = 0; i < one.numel(); ++i) two[i] = two[i + one.numel()] = one[i];
    const Tensor q = m.infer(two);
    const std::size_t half = q.numel() / 2;
    for (std::size_t i = 0; i < half; ++i) CHECK(q[i] == q[i + half]);
    const Tensor single = m.infer(one);
    for (std::size_t i = 0; i < half; ++i) CHECK(std::abs(single[i] - q[i]) < 1e-14);
  }

  TEST_CASE("golden forward digest") {
    const Model m = Model::build(ModelConfig::desk(), 7);
    const Tensor q = m.infer(random_tensor({1, 3, 16, 16}, 8, 0, 1));
    CHECK(digest(q) == doctest::Approx(GOLDEN_Q_DIGEST).epsilon(1e-12));
  }

  TEST_CASE("variants and ablations build and run") {
    for (const char* v : {"standard", "pnbor", "cpix"}) {
      ModelConfig cfg = ModelConfig::desk();
      cfg.variant = parse_variant(v);
      CHECK(Model::build(cfg, 1).infer(Tensor({1, 3, 16, 16}, 0.5)).shape() == Shape{1, 9, 16, 16});
    }
    ModelConfig plain = ModelConfig::desk();
    plain.implant = false;
    const Model m = Model::build(plain, 1);
    CHECK_THROWS_AS(m.parameter("implant.w"), IndexError);
    CHECK(m.infer(Tensor({1, 3, 16, 16}, 0.5)).shape() == Shape{1, 9, 16, 16});
  }

  TEST_CASE("cell embedding starts at zero") {
    const Model m = Model::build(ModelConfig::desk(), 9);
    CHECK(m.parameter("compress.conv2.w") == Tensor({8, 16, 3, 3}, 0.0));
    CHECK(m.infer(random_tensor({1, 3, 16, 16}, 10, 0, 1)) ==
          [&] {
            Graph g;
            return m.forward(g, random_tensor({1, 3, 16, 16}, 10, 0, 1), {false, true}).q.value();
          }());
  }

  TEST_CASE("zeroed cell embedding reaches the implant input") {
    Model m = Model::build(ModelConfig::desk(), 9);
    m.parameter("compress.conv2.w") = random_tensor({8, 16, 3, 3}, 11);
    const Tensor x = random_tensor({1, 3, 16, 16}, 10, 0, 1);
    Graph g;
    const auto pass = m.forward(g, x, {false, true});
    CHECK(pass.cell_embedding.value() == Tensor({1, 8, 2, 2}, 0.0));
    CHECK(max_abs_diff(pass.q.value(), m.infer(x)) > 1e-6);
  }

  TEST_CASE("input validation") {
    const Model m = Model::build(ModelConfig::desk(), 1);
    CHECK_THROWS_AS(m.infer(Tensor({1, 3, 20, 16})), ConfigError);
    CHECK_THROWS_AS(m.infer(Tensor({1, 2, 16, 16})), ConfigError);
    ModelConfig bad = ModelConfig::desk();
    bad.interval = 6;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ModelConfig::desk();
    bad.widths = {16, 32};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("config text round trip") {
    ModelConfig cfg = ModelConfig::paper();
    cfg.variant = VariantKind::kCenterPixel;
    cfg.instance_norm = false;
    ModelConfig back = ModelConfig::desk();
    std::size_t start = 0;
    const std::string text = cfg.to_text();
    while (start < text.size()) {
      const auto end = text.find('\n', start);
      const std::string line = text.substr(start, end - start);
      const auto eq = line.find(" = ");
      if (eq != std::string::npos) CHECK(back.apply(line.substr(0, eq), line.substr(eq + 3)));
      start = end + 1;
    }
    CHECK(back == cfg);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit exact") {
    Model m = Model::build(ModelConfig::desk(), 11);
    auto opt = AdamState::for_parameters([&] {
      std::vector<Tensor> v;
      for (const auto& p : m.parameters()) v.push_back(p.value);
      return v;
    }());
    opt.step = 17;
    opt.first_moment[3] = random_tensor(opt.first_moment[3].shape(), 12);
    const auto path = temp_path("roundtrip.ckpt");
    save_checkpoint(make_checkpoint(m, &opt, 17, "derived-streams seed=3"), path);
    const Checkpoint ck = load_checkpoint(path);
    std::filesystem::remove(path);
    CHECK(ck.iteration == 17);
    CHECK(ck.rng_state == "derived-streams seed=3");
    CHECK(ck.config == m.config());
    const Model back = model_from_checkpoint(ck);
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
      CHECK(back.parameters()[i].name == m.parameters()[i].name);
      CHECK(back.parameters()[i].value == m.parameters()[i].value);
    }
    const auto o = optimizer_from_checkpoint(back, ck);
    REQUIRE(o.has_value());
    CHECK(o->step == 17);
    CHECK(o->first_moment[3] == opt.first_moment[3]);
    CHECK(serialize_checkpoint(ck) == serialize_checkpoint(make_checkpoint(m, &opt, 17, "derived-streams seed=3")));
  }

  TEST_CASE("truncated data is a format error") {
    const Model m = Model::build(ModelConfig::desk(), 13);
    const std::string bytes = serialize_checkpoint(make_checkpoint(m));
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1})
      CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, cut)), FormatError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), FormatError);
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bad), FormatError);
  }

  TEST_CASE("mismatched model names the first differing tensor") {
    const Checkpoint desk = make_checkpoint(Model::build(ModelConfig::desk(), 14));
    Model paper = Model::build(ModelConfig::paper(), 15);
    const Tensor before = paper.parameters()[0].value;
    try {
      load_parameters(paper, desk);
      FAIL("expected a compatibility error");
    } catch (const CompatibilityError& e) {
      CHECK(std::string(e.what()).find("enc0.conv1.w") != std::string::npos);
    }
    CHECK(paper.parameters()[0].value == before);
  }

  TEST_CASE("missing file is an io error") {
    CHECK_THROWS_AS(load_checkpoint(temp_path("does_not_exist.ckpt")), IoError);
  }
}
