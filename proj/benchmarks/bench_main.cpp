#include <random>

#include <benchmark/benchmark.h>

#include "tempdens/calibration.hpp"
#include "tempdens/engine.hpp"
#include "tempdens/filter.hpp"
#include "tempdens/scoring.hpp"

namespace {

using namespace tempdens;

Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

void BM_ScoreKnn(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const Index d = 64;
  const RowMatrix memory = gaussian(state.range(0), d, rng);
  const Vector f = gaussian(d, 1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(score_knn(f, memory, 10));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ScoreKnn)->Arg(1000)->Arg(10000)->Arg(50000)->Unit(benchmark::kMicrosecond);

void BM_ScoreMahalanobis(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const Index d = state.range(0);
  const Matrix means = gaussian(4, d, rng);
  const Matrix inv_cov = Matrix::Identity(d, d);
  const Vector f = gaussian(d, 1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(score_mahalanobis(f, means, inv_cov));
}
BENCHMARK(BM_ScoreMahalanobis)->Arg(8)->Arg(64)->Arg(256);

// Full scored step: energy, density over a 50k memory, temporal, fusion.
void BM_EngineStep(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const Index d = 64;
  CalibrationPack pack;
  pack.class_means = gaussian(2, d, rng);
  pack.inv_cov = Matrix::Identity(d, d);
  pack.id_memory = gaussian(state.range(0), d, rng);
  pack.tau = 3.0;
  Engine engine(pack, {0.0});
  std::vector<FeatureFrame> frames(64);
  for (auto& f : frames) {
    f.features = gaussian(d, 1, rng);
    f.logits = gaussian(2, 1, rng);
  }
  std::size_t i = 0;
  for (auto _ : state) {
    const FeatureFrame& f = frames[i % frames.size()];
    benchmark::DoNotOptimize(engine.step(static_cast<double>(i) * 0.125, i, 0.9, [&] { return f; }));
    ++i;
  }
}
BENCHMARK(BM_EngineStep)->Arg(10000)->Arg(50000)->Unit(benchmark::kMicrosecond);

void BM_Bandpass(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const Matrix x = gaussian(22, state.range(0), rng);
  for (auto _ : state) benchmark::DoNotOptimize(bandpass(x, 8.0, 30.0, 250.0));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 22);
}
BENCHMARK(BM_Bandpass)->Arg(500)->Arg(25000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
