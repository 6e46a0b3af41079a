#include "specrage/affinity.hpp"
#include "specrage/model.hpp"
#include "specrage/mvdata.hpp"
#include "specrage/trainer.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace specrage;

namespace {

Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

ModelConfig bench_model() {
  ModelConfig c;
  c.view_input_dims = {2, 2};
  c.k = 4;
  c.seed = 3;
  return c;
}

}  // namespace

static void BM_KnnAffinity(benchmark::State& state) {
  const Index m = state.range(0);
  const Matrix x = gaussian(m, 8, 1);
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_knn_affinity(x, 22, 1.0));
  state.SetComplexityN(m);
}
BENCHMARK(BM_KnnAffinity)->RangeMultiplier(2)->Range(64, 1024)->Complexity();

static void BM_Gradients(benchmark::State& state) {
  const Index m = state.range(0);
  SpecRageModel model(bench_model());
  const std::vector<Matrix> batch{gaussian(m, 2, 1), gaussian(m, 2, 2)};
  model.ortho_step(batch);
  const std::vector<Matrix> w{gaussian_knn_affinity(batch[0], 22, 1.0), gaussian_knn_affinity(batch[1], 22, 1.0)};
  for (auto _ : state) benchmark::DoNotOptimize(compute_gradients(model, batch, w));
  state.SetComplexityN(m);
}
BENCHMARK(BM_Gradients)->RangeMultiplier(2)->Range(64, 1024)->Complexity();

// One epoch of m = 128 minibatches; time should grow linearly in the row count.
static void BM_Epoch(benchmark::State& state) {
  const Index n = state.range(0);
  const auto train_set = make_blobs_two_view(n, 4, 2, 0.6, 77);
  const auto val_set = make_blobs_two_view(300, 4, 2, 0.6, 78);
  AffinityConfig ac;
  ac.neighbors = 22;
  SiameseConfig sc;
  sc.enabled = false;
  const auto affinity = prepare_affinity(train_set.views, ac, sc, 1);
  TrainConfig tc;
  tc.batch_size = 128;
  tc.epochs = 1;
  tc.restore_best = false;
  for (auto _ : state) {
    SpecRageModel model(bench_model());
    benchmark::DoNotOptimize(train(model, train_set, val_set, affinity, tc));
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_Epoch)->Arg(2500)->Arg(5000)->Arg(10000)->Arg(20000)->Unit(benchmark::kMillisecond)->Complexity(benchmark::oN);
BENCHMARK_MAIN();
