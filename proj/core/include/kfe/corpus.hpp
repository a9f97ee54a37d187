#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kfe/tokenizer.hpp"

namespace kfe {

inline constexpr std::array<char, 5> kOptionLabels{'A', 'B', 'C', 'D', 'E'};

inline std::size_t label_index(char label) {
  return static_cast<std::size_t>(label - 'A');
}

// One retrievable chunk of background text.
struct KnowledgePiece {
  std::string id;
  std::string source;  // document id plus heading path
  std::string text;
  std::size_t token_estimate = 0;
};

enum class Category { MK, CA };

std::string to_string(Category c);
std::optional<Category> category_from_string(std::string_view s);

// A five-option multiple-choice question. `answer` and `category` are
// optional at load time; grading requires both.
struct ExamQuestion {
  std::string id;
  std::string stem;
  std::array<std::string, 5> options;  // indexed by label A..E
  std::optional<char> answer;          // 'A'..'E'
  std::optional<Category> category;
};

struct QuestionBank {
  std::vector<ExamQuestion> entries;  // every entry carries a gold answer
  std::unordered_map<std::string, std::size_t> by_id;
};

struct KnowledgeBase {
  std::vector<KnowledgePiece> pieces;
  std::unordered_map<std::string, std::size_t> by_id;
};

QuestionBank make_question_bank(std::vector<ExamQuestion> entries);
KnowledgeBase make_knowledge_base(std::vector<KnowledgePiece> pieces);

struct Diagnostic {
  std::size_t line = 0;  // 1-based; 0 for file-level diagnostics
  std::string message;
};

struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BankLoadResult {
  QuestionBank bank;
  std::vector<Diagnostic> rejected;
};

struct ExamLoadResult {
  std::vector<ExamQuestion> questions;
  std::size_t n_mk = 0;
  std::size_t n_ca = 0;
  std::size_t n_uncategorized = 0;
  std::vector<Diagnostic> diagnostics;
};

struct KnowledgeLoadResult {
  KnowledgeBase base;
  std::vector<Diagnostic> rejected;
};

// JSONL loaders. Invalid lines are rejected with a line-numbered diagnostic;
// duplicate ids abort the whole load (LoadError names both lines).
BankLoadResult load_question_bank(const std::string& path);
ExamLoadResult load_exam(const std::string& path);
KnowledgeLoadResult load_knowledge(const std::string& path,
                                   const TokenEstimator& estimator = default_estimator());

void write_question_jsonl(const std::vector<ExamQuestion>& questions,
                          const std::string& path);
void write_knowledge_jsonl(const std::vector<KnowledgePiece>& pieces,
                           const std::string& path);

// A document pre-split into (heading path, paragraph) units.
struct DocUnit {
  std::vector<std::string> heading_path;
  std::string paragraph;
};

struct StructuredDocument {
  std::string source_id;
  std::vector<DocUnit> units;
};

// Parses extracted book text: lines of leading '#' open headings (count =
// level), blank lines separate paragraphs.
StructuredDocument parse_structured_text(std::string_view text,
                                         std::string source_id);

// Greedy chunker: paragraphs under the same lowest-level heading are merged
// until `target_tokens` is reached, then a new piece starts. No piece exceeds
// 2x target; oversized paragraphs are split at sentence boundaries.
// Requires target_tokens >= 16.
std::vector<KnowledgePiece> chunk_document(
    const StructuredDocument& doc, std::size_t target_tokens,
    const TokenEstimator& estimator = default_estimator());

}  // namespace kfe
