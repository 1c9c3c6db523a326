#include <random>
#include <string>

#include <benchmark/benchmark.h>

#include "zeta/embed.hpp"

namespace {

using namespace zeta::embed;

EmbeddingStore make_store(std::size_t n, std::uint32_t dim) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g;
  EmbeddingStore store(dim);
  for (std::size_t i = 0; i < n; ++i) {
    Embedding v(dim);
    for (auto& x : v) x = g(rng);
    store.add("ecg-" + std::to_string(i), l2_normalize(v));
  }
  return store;
}

void BM_EncodeBinary(benchmark::State& state) {
  const auto store = make_store(static_cast<std::size_t>(state.range(0)), 768);
  std::size_t bytes = 0;
  for (auto _ : state) {
    const auto out = encode_binary(store);
    bytes = out.size();
    benchmark::DoNotOptimize(out.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes));
}
BENCHMARK(BM_EncodeBinary)->Arg(1000)->Arg(10000);

void BM_DecodeBinary(benchmark::State& state) {
  const auto bytes = encode_binary(make_store(static_cast<std::size_t>(state.range(0)), 768));
  for (auto _ : state) benchmark::DoNotOptimize(decode_binary(bytes));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_DecodeBinary)->Arg(1000)->Arg(10000);

void BM_DecodeJsonl(benchmark::State& state) {
  const auto text = encode_jsonl(make_store(1000, 768));
  for (auto _ : state) benchmark::DoNotOptimize(decode_jsonl(text));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_DecodeJsonl);

void BM_SyntheticEmbed(benchmark::State& state) {
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(synthetic_embed("key-" + std::to_string(i++), 42, 768));
}
BENCHMARK(BM_SyntheticEmbed);

}  // namespace
