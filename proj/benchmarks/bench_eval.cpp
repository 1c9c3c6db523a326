#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "zeta/eval.hpp"

namespace {

void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = u(rng);
    labels[i] = static_cast<int>(i % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(zeta::eval::roc_auc(scores, labels));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RocAuc)->RangeMultiplier(8)->Range(64, 1 << 18)->Complexity(benchmark::oNLogN);

void BM_ConfusionMetrics(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  std::vector<int> preds(n), labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    preds[i] = static_cast<int>(rng() & 1);
    labels[i] = static_cast<int>(rng() & 1);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(zeta::eval::confusion_metrics(preds, labels, zeta::eval::Averaging::Weighted));
  }
}
BENCHMARK(BM_ConfusionMetrics)->Arg(1 << 16);

}  // namespace

BENCHMARK_MAIN();
