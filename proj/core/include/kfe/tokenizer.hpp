#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace kfe {

using Token = std::string;

// Splits text into index terms. ASCII letter/digit runs become lowercased
// word tokens. Every CJK character emits its unigram plus, when the
// immediately following character is also CJK, the two-character bigram.
// Punctuation, whitespace, and other scripts are discarded.
std::vector<Token> tokenize(std::string_view text);

// Prompt-budget heuristic: one token per CJK character plus one per maximal
// run of other non-whitespace characters. Deterministic and subadditive:
// estimate(a) + estimate(b) >= estimate(a + b), which is what additive
// budgeting in the prompt assembler relies on.
std::size_t estimate_tokens(std::string_view text);

// Replacement estimators must be deterministic and subadditive as above.
using TokenEstimator = std::function<std::size_t(std::string_view)>;

inline TokenEstimator default_estimator() {
  return [](std::string_view s) { return estimate_tokens(s); };
}

}  // namespace kfe
