#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kfe/corpus.hpp"

namespace kfe {

// Pulls the predicted option out of a model response. Rule cascade, first
// match wins:
//   1. a standalone label next to an answer marker (答案 / 选 / "answer"),
//      taking the last such occurrence in the text;
//   2. the whole response is a single label character;
//   3. exactly one option's full text appears verbatim in the response;
//   4. otherwise absent.
std::optional<char> extract_answer(std::string_view response,
                                   const std::array<std::string, 5>& options);

// Number of sentences after splitting on 。！？!?. and discarding segments
// with no visible content.
std::size_t sentence_count(std::string_view text);

struct PromptMeta {
  std::size_t shots = 0;
  std::size_t knowledge = 0;
  std::vector<std::pair<std::string, std::string>> dropped;  // (kind, id)
};

// What the runner hands to the grader, one per exam question.
struct ResultInput {
  std::string question_id;
  std::optional<char> predicted;
  std::string response_text;
  PromptMeta prompt_meta;
  std::string error;  // empty on success
};

struct QuestionResult {
  std::string question_id;
  Category category = Category::MK;
  char gold = 'A';
  std::optional<char> predicted;
  bool correct = false;
  std::string response_text;
  std::size_t sentence_count = 0;
  PromptMeta prompt_meta;
  std::string error;
};

struct ExamReport {
  std::size_t n_mk = 0;
  std::size_t n_ca = 0;
  std::size_t correct_mk = 0;
  std::size_t correct_ca = 0;
  double pass_threshold = 60.0;
  bool passed = false;
  std::vector<QuestionResult> per_question;

  std::size_t n_all() const { return n_mk + n_ca; }
  std::size_t correct_all() const { return correct_mk + correct_ca; }
};

// Percentage with exact integer rounding, half-up to two decimals, so the
// printed values match published tables digit for digit.
std::string format_pct(std::size_t correct, std::size_t total);
double pct_value(std::size_t correct, std::size_t total);

struct GradeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Joins results with the exam by question id and aggregates per category.
// Every exam question must carry a gold answer and a category.
ExamReport grade(const std::vector<ResultInput>& results,
                 const std::vector<ExamQuestion>& exam,
                 double pass_threshold = 60.0);

struct StepBucket {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::size_t correct = 0;
};

// Equal-width buckets over [min, max] sentence counts; boundary values go to
// the lower bucket. A degenerate range yields a single bucket.
std::vector<StepBucket> bucket_by_steps(const std::vector<QuestionResult>& results,
                                        std::size_t n_buckets = 10);

enum class ReportFormat { Json, Csv };

void write_report(const ExamReport& report, const std::string& path,
                  ReportFormat format);
ExamReport read_report(const std::string& path);  // JSON only
std::string report_to_json_string(const ExamReport& report);
std::string render_report_table(const ExamReport& report);

}  // namespace kfe
