#include <memory>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>
#include <fmt/format.h>

#include "zeta/embed.hpp"
#include "zeta/infer.hpp"
#include "zeta/kb.hpp"

namespace {

using namespace zeta;

std::shared_ptr<const kb::KnowledgeBase> make_kb(int conditions, int per_polarity) {
  auto kb = std::make_shared<kb::KnowledgeBase>();
  for (int c = 0; c < conditions; ++c) {
    kb::ConditionEntry e;
    e.display_name = fmt::format("condition {}", c);
    for (int i = 0; i < per_polarity; ++i) {
      e.positives.push_back(fmt::format("c{} present finding {}", c, i));
      e.negatives.push_back(fmt::format("c{} absent finding {}", c, i));
    }
    e.paired = true;
    kb->conditions[fmt::format("C{:02}", c)] = std::move(e);
  }
  return kb;
}

void BM_Aggregate(benchmark::State& state) {
  const std::vector<double> pos{0.8, 0.6, 0.55, 0.4, 0.3};
  const std::vector<double> neg{0.2, 0.0, 0.1, -0.1, 0.25};
  infer::InferenceConfig cfg;
  cfg.mode = state.range(0) ? infer::AggregationMode::Paired : infer::AggregationMode::Pooled;
  for (auto _ : state) benchmark::DoNotOptimize(infer::aggregate(pos, neg, cfg));
}
BENCHMARK(BM_Aggregate)->Arg(0)->Arg(1);

// One ECG against every condition with a prebuilt observation bank.
void BM_Classify(benchmark::State& state) {
  const auto kb = make_kb(static_cast<int>(state.range(0)), 5);
  const embed::SyntheticProvider provider({42, static_cast<std::size_t>(state.range(1)), 0.0});
  const infer::ObservationBank bank(*kb, provider);
  const auto ecg = provider.get_ecg("ecg-1");
  for (auto _ : state) benchmark::DoNotOptimize(infer::classify("ecg-1", ecg, *kb, bank, {}));
}
BENCHMARK(BM_Classify)->Args({4, 64})->Args({4, 768})->Args({71, 768});

void BM_ClassifyBatch(benchmark::State& state) {
  const auto kb = make_kb(4, 5);
  const embed::SyntheticProvider provider({42, 768, 0.0});
  std::vector<std::string> ids;
  for (int i = 0; i < 1000; ++i) ids.push_back(fmt::format("ecg-{}", i));
  for (auto _ : state) {
    benchmark::DoNotOptimize(infer::classify_batch(ids, *kb, provider, {}, static_cast<std::size_t>(state.range(0))));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ids.size()));
}
BENCHMARK(BM_ClassifyBatch)->Arg(1)->Arg(4)->UseRealTime();

}  // namespace
