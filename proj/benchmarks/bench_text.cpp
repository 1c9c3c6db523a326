#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "zeta/text.hpp"

namespace {

void BM_NormalizeText(benchmark::State& state) {
  const std::vector<std::string> inputs{
      "  ST-segment elevation in leads V1-V4 ", "Absence of Q waves.", "Regular P-P intervals;  rate 60-100 bpm",
      "QRS duration < 120 ms", "No \"notched\" P waves (P mitrale)"};
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(zeta::normalize_text(inputs[i++ % inputs.size()]));
}
BENCHMARK(BM_NormalizeText);

}  // namespace
