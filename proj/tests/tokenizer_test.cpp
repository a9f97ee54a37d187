#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "kfe/tokenizer.hpp"
#include "kfe/utf8.hpp"

using kfe::estimate_tokens;
using kfe::tokenize;

namespace {

// Random mix of CJK, ASCII words, punctuation, and whitespace.
std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
  std::string out;
  const std::size_t len = rng() % (max_len + 1);
  for (std::size_t i = 0; i < len; ++i) {
    switch (rng() % 6) {
      case 0:
      case 1:
        kfe::utf8::append(out, static_cast<char32_t>(0x4E00 + rng() % 1000));
        break;
      case 2:
        out.push_back(static_cast<char>('a' + rng() % 26));
        break;
      case 3:
        out.push_back(static_cast<char>('A' + rng() % 26));
        break;
      case 4:
        out.push_back(" \t\n"[rng() % 3]);
        break;
      default:
        out.push_back(",.!?;:"[rng() % 6]);
        break;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("empty input yields no tokens") {
  CHECK(tokenize("").empty());
  CHECK(estimate_tokens("") == 0);
}

TEST_CASE("latin and digit runs are lowercased words") {
  CHECK(tokenize("BM25 Test") == std::vector<std::string>{"bm25", "test"});
  CHECK(tokenize("ECG,ST") == std::vector<std::string>{"ecg", "st"});
}

TEST_CASE("cjk emits unigrams and adjacent bigrams") {
  CHECK(tokenize("心肌梗") ==
        std::vector<std::string>{"心", "心肌", "肌", "肌梗", "梗"});
  // Punctuation breaks adjacency: no bigram across the comma.
  CHECK(tokenize("心，肌") == std::vector<std::string>{"心", "肌"});
  // Latin between CJK breaks adjacency too.
  CHECK(tokenize("心x肌") == std::vector<std::string>{"心", "x", "肌"});
}

TEST_CASE("mixed scripts") {
  CHECK(tokenize("ST段抬高") ==
        std::vector<std::string>{"st", "段", "段抬", "抬", "抬高", "高"});
}

TEST_CASE("estimate counts cjk chars plus non-cjk segments") {
  CHECK(estimate_tokens("abc def") == 2);
  const std::string ten_cjk = "心肌梗死患者入院治疗";
  CHECK(estimate_tokens(ten_cjk) == 10);
  CHECK(estimate_tokens(ten_cjk + "ECG") == 11);
  CHECK(estimate_tokens("，") == 1);  // CJK punctuation is a segment, not a CJK char
}

TEST_CASE("tokenize never emits empty or whitespace tokens") {
  std::mt19937_64 rng(42);
  for (int iter = 0; iter < 2000; ++iter) {
    const std::string text = random_text(rng, 80);
    for (const auto& token : tokenize(text)) {
      CHECK(!token.empty());
      for (char32_t cp : kfe::utf8::decode(token)) CHECK(!kfe::utf8::is_space(cp));
    }
  }
}

TEST_CASE("estimate is subadditive under concatenation") {
  std::mt19937_64 rng(43);
  for (int iter = 0; iter < 5000; ++iter) {
    const std::string a = random_text(rng, 40);
    const std::string b = random_text(rng, 40);
    CHECK(estimate_tokens(a + b) <= estimate_tokens(a) + estimate_tokens(b));
  }
}

TEST_CASE("tokenization is deterministic") {
  std::mt19937_64 rng(44);
  for (int iter = 0; iter < 500; ++iter) {
    const std::string text = random_text(rng, 60);
    CHECK(tokenize(text) == tokenize(text));
    CHECK(estimate_tokens(text) == estimate_tokens(text));
  }
}
