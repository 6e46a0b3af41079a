#include "../support.hpp"

#include "specrage/error.hpp"
#include "specrage/metrics.hpp"
#include "specrage/mvdata.hpp"

#include <doctest.h>

#include <map>
#include <numeric>

using namespace specrage;
using namespace specrage::testing;

namespace {

using L = std::vector<int>;

// Max matched fraction over every injective map pred label -> truth label.
double brute_accuracy(const L& pred, const L& truth) {
  L p_ids = pred, t_ids = truth;
  std::sort(p_ids.begin(), p_ids.end());
  p_ids.erase(std::unique(p_ids.begin(), p_ids.end()), p_ids.end());
  std::sort(t_ids.begin(), t_ids.end());
  t_ids.erase(std::unique(t_ids.begin(), t_ids.end()), t_ids.end());
  // pad truth with dummies so every pred label gets a partner
  while (t_ids.size() < p_ids.size()) t_ids.push_back(-1000 - static_cast<int>(t_ids.size()));
  std::vector<std::size_t> perm(t_ids.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::map<int, int> m;
    for (std::size_t a = 0; a < p_ids.size(); ++a) m[p_ids[a]] = t_ids[perm[a]];
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += m[pred[i]] == truth[i];
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(pred.size());
}

// Counts agreeing/disagreeing pairs directly.
double brute_ari(const L& a, const L& b) {
  const auto n = a.size();
  double both = 0, only_a = 0, only_b = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      only_a += sa;
      only_b += sb;
      pairs += 1;
    }
  const double expected = only_a * only_b / pairs;
  const double max_index = 0.5 * (only_a + only_b);
  return (both - expected) / (max_index - expected);
}

L random_labels(std::size_t n, int c, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> d(0, c - 1);
  L out(n);
  for (auto& x : out) x = d(rng);
  return out;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("assignment solver against brute force") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Index c = 2 + static_cast<Index>(s % 5);
    const Matrix cost = random_matrix(c, c, 500 + s).cwiseAbs();
    const auto assign = solve_assignment(cost);
    double got = 0.0;
    for (Index r = 0; r < c; ++r) got += cost(r, assign[static_cast<std::size_t>(r)]);
    std::vector<Index> perm(static_cast<std::size_t>(c));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double t = 0.0;
      for (Index r = 0; r < c; ++r) t += cost(r, perm[static_cast<std::size_t>(r)]);
      best = std::min(best, t);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
  CHECK_THROWS_AS(solve_assignment(Matrix::Zero(2, 3)), ParameterError);
}

TEST_CASE("contingency table") {
  const L pred{5, 5, 2, 2, 2};
  const L truth{0, 1, 1, 1, 0};
  const Matrix t = contingency_table(pred, truth);
  Matrix expect(2, 2);
  expect << 1, 2, 1, 1;  // rows: pred 2, pred 5
  CHECK(t == expect);
}

TEST_CASE("clustering accuracy") {
  const L truth{0, 0, 1, 1, 2, 2, 2};
  CHECK(clustering_accuracy(truth, truth) == 1.0);
  const L relabeled{7, 7, 3, 3, 9, 9, 9};
  CHECK(clustering_accuracy(relabeled, truth) == 1.0);
  CHECK(clustering_accuracy(L{0, 0, 1, 1}, L{0, 1, 1, 0}) == doctest::Approx(0.5));
  for (std::uint64_t s = 0; s < 30; ++s) {
    const int cp = 2 + static_cast<int>(s % 4), ct = 2 + static_cast<int>((s / 4) % 4);
    const L p = random_labels(25, cp, 900 + s), t = random_labels(25, ct, 1900 + s);
    CHECK(clustering_accuracy(p, t) == doctest::Approx(brute_accuracy(p, t)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(clustering_accuracy(L{0, 1}, L{0}), ParameterError);
}

TEST_CASE("nmi") {
  const L a{0, 0, 1, 1, 2, 2};
  CHECK(nmi(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(nmi(L{1, 1, 1}, L{4, 4, 4}) == 1.0);
  CHECK(nmi(L{1, 1, 1, 1}, L{0, 1, 0, 1}) == 0.0);
  // 4-sample table: pred (0,0,1,1), truth (0,0,0,1)
  const double h_pred = std::log(2.0);
  const double h_truth = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  // joint: (0,0)=1/2, (1,0)=1/4, (1,1)=1/4
  const double mi = 0.5 * std::log(0.5 / (0.5 * 0.75)) + 0.25 * std::log(0.25 / (0.5 * 0.75)) +
                    0.25 * std::log(0.25 / (0.5 * 0.25));
  CHECK(nmi(L{0, 0, 1, 1}, L{0, 0, 0, 1}) == doctest::Approx(mi / std::sqrt(h_pred * h_truth)).epsilon(1e-12));
  const L p = random_labels(20000, 4, 1), t = random_labels(20000, 5, 2);
  CHECK(nmi(p, t) <= 0.01);
  CHECK(nmi(p, t) == doctest::Approx(nmi(t, p)).epsilon(1e-12));
}

TEST_CASE("ari") {
  const L a{0, 0, 1, 1, 2};
  CHECK(ari(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ari(L{0, 0, 1, 1}, L{0, 0, 0, 1}) == doctest::Approx(brute_ari({0, 0, 1, 1}, {0, 0, 0, 1})).epsilon(1e-12));
  for (std::uint64_t s = 0; s < 15; ++s) {
    const L p = random_labels(30, 3, 40 + s), t = random_labels(30, 4, 80 + s);
    CHECK(ari(p, t) == doctest::Approx(brute_ari(p, t)).epsilon(1e-10));
    CHECK(ari(p, t) == doctest::Approx(ari(t, p)).epsilon(1e-12));
  }
  const L truth = random_labels(1000, 4, 3), noise = random_labels(1000, 4, 4);
  CHECK(std::abs(ari(noise, truth)) <= 0.05);
}

TEST_CASE("relative degradation") {
  CHECK(relative_degradation(0.7, 0.7) == 0.0);
  CHECK(relative_degradation(0.9, 0.792) == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(relative_degradation(0.5, 0.25) == doctest::Approx(50.0));
  CHECK_THROWS_AS(relative_degradation(0.0, 0.1), ParameterError);
}

TEST_CASE("kmeans on exact points and a single cluster") {
  Matrix x(6, 2);
  x << 0, 0, 0, 0, 5, 5, 5, 5, -3, 1, -3, 1;
  const auto r = kmeans(x, 3, 1);
  CHECK(r.inertia == doctest::Approx(0.0));
  CHECK(clustering_accuracy(r.labels, L{0, 0, 1, 1, 2, 2}) == 1.0);

  const Matrix y = random_matrix(50, 3, 9);
  const auto one = kmeans(y, 1, 2);
  const RowVector mean = y.colwise().mean();
  CHECK((one.centroids.row(0) - mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(one.inertia == doctest::Approx((y.rowwise() - mean).squaredNorm()).epsilon(1e-12));
  CHECK_THROWS_AS(kmeans(y, 51, 1), ParameterError);
  CHECK_THROWS_AS(kmeans(y, 0, 1), ParameterError);
}

TEST_CASE("kmeans recovers blobs, is deterministic and never increases inertia") {
  const auto ds = make_blobs_two_view(300, 4, 5, 1.0, 13);
  const auto r = kmeans(ds.views[0], 4, 21);
  CHECK(clustering_accuracy(r.labels, *ds.labels) >= 0.95);
  const auto again = kmeans(ds.views[0], 4, 21);
  CHECK(again.labels == r.labels);
  CHECK(again.inertia == r.inertia);
  REQUIRE(!r.inertia_trace.empty());
  for (std::size_t i = 1; i < r.inertia_trace.size(); ++i)
    CHECK(r.inertia_trace[i] <= r.inertia_trace[i - 1] * (1 + 1e-12));
  // best of several restarts is no worse than a single restart
  KMeansOptions single;
  single.restarts = 1;
  CHECK(r.inertia <= kmeans(ds.views[0], 4, 21, single).inertia * (1 + 1e-12));
}

TEST_CASE("evaluate_embedding on a one-hot embedding") {
  const L truth{0, 1, 2, 0, 1, 2, 2, 1};
  Matrix onehot = Matrix::Zero(8, 3);
  for (Index i = 0; i < 8; ++i) onehot(i, truth[static_cast<std::size_t>(i)]) = 1.0;
  const auto rep = evaluate_embedding(onehot, truth, 3, 5);
  CHECK(rep.acc == 1.0);
  CHECK(rep.nmi == doctest::Approx(1.0));
  CHECK(rep.ari == doctest::Approx(1.0));
  CHECK(rep.seed == 5);
  CHECK_THROWS_AS(evaluate_embedding(onehot, L{0, 1}, 3, 5), ParameterError);
}

TEST_CASE("report round trip and format errors") {
  EvalReport r;
  r.acc = 0.1 + 0.2;
  r.nmi = 1.0 / 3.0;
  r.ari = -0.0625;
  r.grassmann_dist_sq = 0.125;
  r.offdiag_ratios = {1e-3, 0.25};
  r.degradation_pct = 12.5;
  r.seed = 18446744073709551615ull;
  r.config["model.fusion"] = "weighting";
  const auto back = EvalReport::parse(r.serialize());
  CHECK(back.acc == r.acc);
  CHECK(back.nmi == r.nmi);
  CHECK(back.ari == r.ari);
  CHECK(back.grassmann_dist_sq == r.grassmann_dist_sq);
  CHECK(back.offdiag_ratios == r.offdiag_ratios);
  CHECK(back.degradation_pct == r.degradation_pct);
  CHECK(back.seed == r.seed);
  CHECK(back.config == r.config);

  const auto path = temp_dir("report") / "r.txt";
  r.write(path);
  CHECK(EvalReport::read(path).serialize() == r.serialize());

  CHECK_THROWS_AS(EvalReport::parse("acc\n"), FormatError);
  CHECK_THROWS_AS(EvalReport::parse("acc x\n"), FormatError);
  CHECK_THROWS_AS(EvalReport::parse("bogus 1\n"), FormatError);
  CHECK_THROWS_AS(EvalReport::parse("seed -4\n"), FormatError);
  CHECK_THROWS_AS(EvalReport::parse("offdiag_ratio.x 0.1\n"), FormatError);
  CHECK_THROWS_AS(EvalReport::parse("offdiag_ratio.1 0.1\n"), FormatError);
  CHECK_THROWS_AS(EvalReport::read(path.parent_path() / "missing.txt"), IoError);
}

}  // TEST_SUITE
