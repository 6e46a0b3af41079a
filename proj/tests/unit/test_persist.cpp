#include "../support.hpp"

#include "specrage/error.hpp"
#include "specrage/persist.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace specrage;
using namespace specrage::testing;

namespace {

SpecRageModel frozen_model(FusionMode mode) {
  ModelConfig c;
  c.view_input_dims = {3, 5};
  c.k = 2;
  c.view_hidden = {6, 4};
  c.fusion_hidden = {5};
  c.temperature = 2.5;
  c.fusion_mode = mode;
  c.activation = Activation::tanh;
  c.seed = 17;
  SpecRageModel m(c);
  m.ortho_step({random_matrix(10, 3, 1), random_matrix(10, 5, 2)});
  m.freeze();
  return m;
}

}  // namespace

TEST_SUITE("persist") {

TEST_CASE("model checkpoints round trip exactly in every mode") {
  const std::vector<Matrix> batch{random_matrix(7, 3, 3), random_matrix(7, 5, 4)};
  for (auto mode : {FusionMode::weighting, FusionMode::simple_average, FusionMode::concat, FusionMode::linear}) {
    CAPTURE(to_string(mode));
    const auto model = frozen_model(mode);
    ConfigEcho echo{{"model.fusion", to_string(mode)}, {"seed", "17"}, {"note", "two words"}};
    std::stringstream ss;
    write_model(ss, model, echo);
    const auto cp = read_model(ss);
    CHECK(cp.config == echo);
    CHECK(cp.model.frozen());
    CHECK(cp.model.fusion_mode() == mode);
    CHECK(cp.model.temperature() == 2.5);
    CHECK(cp.model.config().view_hidden == model.config().view_hidden);
    CHECK(cp.model.ortho_weights() == model.ortho_weights());
    CHECK(cp.model.embed(batch) == model.embed(batch));
    // writing the loaded model again reproduces the same bytes
    std::stringstream again;
    write_model(again, cp.model, cp.config);
    CHECK(again.str() == ss.str());
  }
}

TEST_CASE("unfrozen models keep their state") {
  ModelConfig c;
  c.view_input_dims = {2, 2};
  c.k = 1;
  c.view_hidden = {3};
  c.fusion_hidden = {3};
  const SpecRageModel fresh(c);
  std::stringstream ss;
  write_model(ss, fresh);
  const auto cp = read_model(ss);
  CHECK(!cp.model.frozen());
  CHECK(!cp.model.has_ortho_weights());
  CHECK(cp.model.view_nets()[0] == fresh.view_nets()[0]);
}

TEST_CASE("model files and errors") {
  const auto dir = temp_dir("persist");
  const auto model = frozen_model(FusionMode::weighting);
  save_model(dir / "m.ckpt", model, {{"a", "1"}});
  const auto cp = load_model(dir / "m.ckpt");
  CHECK(cp.config.at("a") == "1");
  CHECK_THROWS_AS(load_model(dir / "absent.ckpt"), IoError);
  CHECK_THROWS_AS(save_model(dir / "x.ckpt", model, {{"bad key", "1"}}), ParameterError);
  CHECK_THROWS_AS(save_model(dir / "x.ckpt", model, {{"k", "line\nbreak"}}), ParameterError);

  std::stringstream ss;
  write_model(ss, model);
  const std::string text = ss.str();
  std::istringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(read_model(truncated), FormatError);
  std::istringstream junk("not a checkpoint\n");
  CHECK_THROWS_AS(read_model(junk), FormatError);

  // a corrupted number inside a file names the file
  std::string broken = text;
  const auto pos = broken.find("ortho");
  REQUIRE(pos != std::string::npos);
  broken.replace(broken.find('\n', broken.find('\n', pos) + 1) + 1, 1, "x");
  std::ofstream(dir / "broken.ckpt") << broken;
  try {
    load_model(dir / "broken.ckpt");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("broken.ckpt") != std::string::npos);
  }
}

TEST_CASE("affinity contexts round trip") {
  AffinityContext ctx;
  ctx.config.neighbors = 7;
  ctx.config.kernel_sigma = 0.75;
  SiameseConfig sc;
  sc.hidden = {4};
  sc.output_dim = 3;
  auto trained = SiameseContext::untrained(5, sc, 9);
  trained.set_scale(0.4);
  trained.mark_trained();
  ctx.views.push_back(trained);
  auto plain = SiameseContext::identity();
  plain.set_scale(1.25);
  ctx.views.push_back(plain);

  std::stringstream ss;
  write_affinity(ss, ctx);
  const auto back = read_affinity(ss);
  CHECK(back.config.neighbors == 7);
  CHECK(back.config.kernel_sigma == 0.75);
  REQUIRE(back.views.size() == 2);
  CHECK(back.views[0].has_network());
  CHECK(back.views[0].network() == trained.network());
  CHECK(back.views[0].scale() == 0.4);
  CHECK(back.views[0].trained());
  CHECK(!back.views[1].has_network());
  CHECK(back.views[1].scale() == 1.25);

  const std::vector<Matrix> batch{random_matrix(12, 5, 1), random_matrix(12, 2, 2)};
  const auto wa = ctx.batch_affinities(batch);
  const auto wb = back.batch_affinities(batch);
  CHECK(wa[0] == wb[0]);
  CHECK(wa[1] == wb[1]);

  const auto dir = temp_dir("persist_aff");
  save_affinity(dir / "a.ckpt", ctx);
  CHECK(load_affinity(dir / "a.ckpt").views.size() == 2);
  CHECK_THROWS_AS(load_affinity(dir / "none.ckpt"), IoError);
  std::istringstream junk("affinity 2\n");
  CHECK_THROWS_AS(read_affinity(junk), FormatError);
}

}  // TEST_SUITE
