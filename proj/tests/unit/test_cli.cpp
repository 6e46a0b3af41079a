#include "../support.hpp"

#include "specrage/error.hpp"
#include "specrage/spectral.hpp"
#include "specrage_cli/commands.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace specrage;
using namespace specrage::cli;
using namespace specrage::testing;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> read_manifest(const fs::path& p) {
  std::map<std::string, std::string> out;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    const auto sp = line.find(' ');
    out[line.substr(0, sp)] = sp == std::string::npos ? "" : line.substr(sp + 1);
  }
  return out;
}

// A run small enough for unit tests.
RunConfig small_run(const fs::path& out) {
  auto c = RunConfig::parse(
      "blobs.n = 400\n"
      "blobs.dim = 3\n"
      "affinity.neighbors = 8\n"
      "siamese.hidden = 16\n"
      "siamese.output = 8\n"
      "siamese.epochs = 2\n"
      "model.view_hidden = 16,16\n"
      "model.fusion_hidden = 8\n"
      "train.batch = 64\n"
      "train.epochs = 3\n"
      "seed = 5\n");
  apply_override(c, "output=" + out.string());
  return c;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config documents parse, echo and validate") {
  const auto c = RunConfig::parse("# a comment\n\nmodel.k = 3\n  train.epochs=7  \nmodel.fusion = concat\n");
  CHECK(c.model.k == 3);
  CHECK(c.train.epochs == 7);
  CHECK(c.model.fusion_mode == FusionMode::concat);
  CHECK(c.source_text.find("model.k = 3") != std::string::npos);

  const auto resolved = c.resolved();
  CHECK(resolved.size() == RunConfig::keys().size());
  CHECK(resolved.at("model.k") == "3");
  // the resolved echo parses back to the same settings
  std::string text;
  for (const auto& [k, v] : resolved) text += k + " = " + v + "\n";
  CHECK(RunConfig::parse(text).resolved() == resolved);

  try {
    RunConfig::parse("model.k = 3\nmodle.k = 4\n");
    FAIL("unknown key accepted");
  } catch (const ParameterError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("modle.k") != std::string::npos);
  }
  CHECK_THROWS_AS(RunConfig::parse("model.k = three\n"), ParameterError);
  CHECK_THROWS_AS(RunConfig::parse("model.k\n"), ParameterError);
  CHECK_THROWS_AS(RunConfig::parse("model.fusion = attention\n"), ParameterError);

  RunConfig bad;
  bad.train.batch_size = bad.affinity.neighbors;
  CHECK_THROWS_AS(bad.validate(), ParameterError);

  RunConfig o;
  apply_override(o, "train.epochs=11");
  CHECK(o.train.epochs == 11);
  CHECK(o.source_text.find("train.epochs = 11") != std::string::npos);
  CHECK_THROWS_AS(apply_override(o, "train.epochs"), ParameterError);
  CHECK(!RunConfig::describe_keys().empty());
}

TEST_CASE("gen-data writes splits, reruns byte-identically and records contamination") {
  const auto dir = temp_dir("cli_gen");
  auto c = small_run(dir / "data");
  apply_override(c, "contam.kind=outlier");
  apply_override(c, "contam.ratio=0.4");
  cmd_gen_data(c, "specrage gen-data");
  std::map<std::string, std::string> first;
  for (const auto& e : fs::recursive_directory_iterator(dir / "data"))
    if (e.is_regular_file()) first[fs::relative(e.path(), dir).string()] = slurp(e.path());
  for (const char* split : {"train", "val", "test"})
    for (const char* f : {"view_0.csv", "view_1.csv", "labels.csv", "mask.csv"})
      CHECK(first.count(std::string("data/") + split + "/" + f) == 1);

  cmd_gen_data(c, "specrage gen-data");
  for (const auto& [name, bytes] : first) CHECK(slurp(dir / name) == bytes);

  const auto m = read_manifest(dir / "data" / "manifest.txt");
  CHECK(m.at("contaminated_rows.0") == "160");
  CHECK(m.at("contaminated_fraction.0") == "0.4");
  CHECK(m.at("contaminated_rows.1") == "0");
  // the masks across all splits agree with the manifest
  Index masked = 0, rows = 0;
  for (const char* split : {"train", "val", "test"}) {
    const Matrix mask = load_matrix_csv(dir / "data" / split / "mask.csv");
    masked += static_cast<Index>(mask.col(0).sum());
    CHECK(mask.col(1).sum() == 0.0);
    rows += mask.rows();
  }
  CHECK(masked == 160);
  CHECK(rows == 400);
}

TEST_CASE("train, embed, eval and oracle-check on a small run") {
  const auto dir = temp_dir("cli_run");
  auto c = small_run(dir / "run");
  const auto trained = cmd_train(c, "specrage train");
  CHECK(trained.history.epochs.size() == 3);
  for (const char* f : {"model.ckpt", "affinity.ckpt", "scaler.txt", "history.csv", "log.txt", "config.txt",
                        "config.resolved.txt", "manifest.txt"})
    CHECK(fs::exists(dir / "run" / f));
  // header plus one line per epoch
  const std::string hist = slurp(dir / "run" / "history.csv");
  CHECK(std::count(hist.begin(), hist.end(), '\n') == 4);

  const auto run = load_run(dir / "run");
  CHECK(run.model.frozen());
  CHECK(run.config.at("train.epochs") == "3");

  // data directory for embedding: the generated test split
  auto g = c;
  apply_override(g, "output=" + (dir / "data").string());
  cmd_gen_data(g, "specrage gen-data");
  const auto test_dir = dir / "data" / "test";
  const auto e = cmd_embed(dir / "run", test_dir, dir / "emb", "specrage embed");
  const auto test = load_dataset_dir(test_dir);
  CHECK(e.y.rows() == test.size());
  CHECK(load_matrix_csv(dir / "emb" / "embeddings.csv") == e.y);
  REQUIRE(e.weights.has_value());
  CHECK(load_matrix_csv(dir / "emb" / "weights.csv").rows() == test.size());

  SUBCASE("train+test then test alone give the same test rows") {
    const auto train = load_dataset_dir(dir / "data" / "train");
    const auto both = dir / "both";
    fs::create_directories(both);
    for (std::size_t v = 0; v < 2; ++v) {
      Matrix stacked(train.size() + test.size(), train.views[v].cols());
      stacked << train.views[v], test.views[v];
      save_matrix_csv(both / ("view_" + std::to_string(v) + ".csv"), stacked);
    }
    const auto eb = cmd_embed(dir / "run", both, dir / "emb_both", "specrage embed");
    // batch size changes Eigen's product blocking, so allow last-bit noise
    CHECK((eb.y.bottomRows(test.size()) - e.y).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("identical inputs give identical rows") {
    const auto twin = dir / "twin";
    fs::create_directories(twin);
    for (std::size_t v = 0; v < 2; ++v) {
      Matrix x(2, test.views[v].cols());
      x << test.views[v].row(0), test.views[v].row(0);
      save_matrix_csv(twin / ("view_" + std::to_string(v) + ".csv"), x);
    }
    const auto et = cmd_embed(dir / "run", twin, dir / "emb_twin", "specrage embed");
    CHECK(et.y.row(0) == et.y.row(1));
    CHECK((et.y.row(0) - e.y.row(0)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("oracle-check against its own eigenvectors and random subspaces") {
    // independent oracle: Laplacians of the kernel on the scaled test split
    const auto scaled = run.scaler.apply(test.views);
    std::vector<Matrix> laps;
    for (std::size_t v = 0; v < 2; ++v) {
      const Matrix z = run.affinity.views[v].embed(scaled[v]);
      laps.push_back(laplacian(gaussian_knn_affinity(z, run.affinity.config.neighbors, run.affinity.sigma(static_cast<Index>(v)))));
    }
    const auto oracle = smallest_eigvecs(average_laplacian(laps), 4);
    save_matrix_csv(dir / "oracle.csv", oracle.vectors);
    const auto d = cmd_oracle_check(dir / "run", test_dir, dir / "oracle.csv", dir / "diag.txt");
    CHECK(d.grassmann_dist_sq <= 1e-8);
    CHECK(d.k == 4);
    CHECK(d.n == test.size());
    REQUIRE(d.offdiag_ratios.size() == 2);
    CHECK(fs::exists(dir / "diag.txt"));

    save_matrix_csv(dir / "random.csv", random_matrix(test.size(), 4, 99));
    const auto r = cmd_oracle_check(dir / "run", test_dir, dir / "random.csv", dir / "diag_r.txt");
    // a random 4-dim subspace of R^n sits at about k - k^2/n from any fixed one
    CHECK(r.grassmann_dist_sq > 3.0);

    const auto own = cmd_oracle_check(dir / "run", test_dir, std::nullopt, dir / "diag_own.txt");
    CHECK(own.grassmann_dist_sq >= 0.0);
    CHECK(own.grassmann_dist_sq <= 4.0);
  }
  SUBCASE("eval scores one-hot embeddings perfectly and writes a parseable report") {
    const Labels& y = *test.labels;
    Matrix onehot = Matrix::Zero(test.size(), 4);
    for (Index i = 0; i < test.size(); ++i) onehot(i, y[static_cast<std::size_t>(i)]) = 1.0;
    save_matrix_csv(dir / "onehot.csv", onehot);
    const auto rep = cmd_eval(dir / "onehot.csv", test_dir / "labels.csv", c, dir / "report.txt");
    CHECK(rep.acc == 1.0);
    CHECK(rep.nmi == doctest::Approx(1.0));
    CHECK(rep.ari == doctest::Approx(1.0));
    const auto back = EvalReport::read(dir / "report.txt");
    CHECK(back.acc == rep.acc);
    CHECK(back.seed == rep.seed);
    CHECK(back.config.at("eval.clusters") == "4");
    CHECK(back.config.at("labels") == (test_dir / "labels.csv").string());
    CHECK_THROWS_AS(cmd_eval(dir / "onehot.csv", dir / "data" / "val" / "labels.csv", c, dir / "r2.txt"), Error);
  }
}

TEST_CASE("eval of shuffled labels scores near zero ARI") {
  const auto dir = temp_dir("cli_shuffle");
  Labels truth(1000);
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i % 4);
  Matrix onehot = Matrix::Zero(1000, 4);
  for (Index i = 0; i < 1000; ++i) onehot(i, truth[static_cast<std::size_t>(i)]) = 1.0;
  Rng rng(3);
  Labels shuffled = truth;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  save_matrix_csv(dir / "e.csv", onehot);
  save_labels(dir / "l.csv", shuffled);
  const auto rep = cmd_eval(dir / "e.csv", dir / "l.csv", RunConfig{}, dir / "r.txt");
  CHECK(std::abs(rep.ari) <= 0.05);
}

TEST_CASE("robustness sweep table") {
  const auto dir = temp_dir("cli_sweep");
  auto c = small_run(dir / "sweep");
  apply_override(c, "contam.kind=outlier");
  apply_override(c, "train.epochs=2");
  apply_override(c, "siamese.enabled=false");
  SUBCASE("only the clean ratio") {
    apply_override(c, "sweep.ratios=0");
    apply_override(c, "sweep.modes=weighting,concat");
    const auto r = cmd_robustness_sweep(c, "specrage robustness-sweep");
    REQUIRE(r.rows.size() == 2);
    for (const auto& row : r.rows) {
      CHECK(row.degradation_mean == 0.0);
      CHECK(row.repeats == 1);
    }
    CHECK(fs::exists(dir / "sweep" / "sweep.csv"));
  }
  SUBCASE("ratios x modes, clean baseline trained even when unlisted") {
    apply_override(c, "sweep.ratios=0.3,0.1");
    apply_override(c, "sweep.modes=weighting,simple_average");
    const auto r = cmd_robustness_sweep(c, "specrage robustness-sweep");
    REQUIRE(r.rows.size() == 4);
    CHECK(r.rows[0].ratio == 0.3);
    CHECK(r.rows[0].mode == FusionMode::weighting);
    CHECK(r.rows[1].mode == FusionMode::simple_average);
    CHECK(r.rows[2].ratio == 0.1);
    CHECK(r.cells.size() == 4);
    for (const auto& cell : r.cells)
      CHECK(cell.degradation_pct == doctest::Approx(relative_degradation(cell.clean_acc, cell.acc)));
    const std::string table = slurp(dir / "sweep" / "sweep.csv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 5);
  }
  SUBCASE("needs a contamination kind") {
    apply_override(c, "contam.kind=none");
    CHECK_THROWS_AS(cmd_robustness_sweep(c, "x"), ParameterError);
  }
}

}  // TEST_SUITE
