#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "kfe/retrieval.hpp"

namespace {

// Synthetic corpus with a shared vocabulary so queries hit many documents.
std::vector<std::pair<std::string, std::string>> synthetic_docs(std::size_t n) {
  std::mt19937_64 rng(7);
  const std::vector<std::string> vocab = {
      "高血压", "糖尿病", "心肌梗死", "肺炎", "贫血",  "骨折", "哮喘",
      "治疗",   "诊断",   "患者",     "症状", "检查",  "药物", "手术"};
  std::vector<std::pair<std::string, std::string>> docs;
  docs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    const std::size_t words = 20 + rng() % 30;
    for (std::size_t w = 0; w < words; ++w) {
      text += vocab[rng() % vocab.size()];
      text += "的";
    }
    docs.emplace_back("doc-" + std::to_string(i), text);
  }
  return docs;
}

void BM_BuildIndex(benchmark::State& state) {
  const auto docs = synthetic_docs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto index = kfe::RetrievalIndex::build(docs);
    benchmark::DoNotOptimize(index);
  }
}
BENCHMARK(BM_BuildIndex)->Arg(100)->Arg(1000);

void BM_TopK(benchmark::State& state) {
  const auto docs = synthetic_docs(static_cast<std::size_t>(state.range(0)));
  const auto index = kfe::RetrievalIndex::build(docs);
  const std::string query = "患者高血压症状的诊断与治疗药物";
  for (auto _ : state) {
    auto hits = index.top_k(query, 10);
    benchmark::DoNotOptimize(hits);
  }
}
BENCHMARK(BM_TopK)->Arg(100)->Arg(1000)->Arg(10000);

}  // namespace
