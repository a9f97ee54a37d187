#include <benchmark/benchmark.h>

#include <string>

#include "kfe/tokenizer.hpp"

namespace {

std::string mixed_text(std::size_t repeats) {
  static const std::string unit =
      "患者男性65岁，突发胸骨后压榨性疼痛2小时，伴大汗。ECG示ST段抬高，"
      "肌钙蛋白TnI升高。首选再灌注治疗，发病12小时内行急诊PCI。";
  std::string text;
  text.reserve(unit.size() * repeats);
  for (std::size_t i = 0; i < repeats; ++i) text += unit;
  return text;
}

void BM_Tokenize(benchmark::State& state) {
  const std::string text = mixed_text(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto tokens = kfe::tokenize(text);
    benchmark::DoNotOptimize(tokens);
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_Tokenize)->Arg(1)->Arg(16)->Arg(256);

void BM_EstimateTokens(benchmark::State& state) {
  const std::string text = mixed_text(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kfe::estimate_tokens(text));
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_EstimateTokens)->Arg(1)->Arg(16)->Arg(256);

}  // namespace
