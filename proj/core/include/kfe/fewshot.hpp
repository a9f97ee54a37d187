#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kfe/corpus.hpp"
#include "kfe/llm.hpp"
#include "kfe/templates.hpp"

namespace kfe {

// The four ways a retrieved example can be turned into a demonstration.
enum class Strategy {
  CorrectAns,               // question + options + gold answer
  GeneratedAns,             // question + options + model-generated answer
  GeneratedCorrectAns,      // keep only examples the model answers correctly
  CorrectAnsPlusInference,  // gold answer + model-generated rationale
};

std::string to_string(Strategy s);
std::optional<Strategy> strategy_from_string(std::string_view s);

enum class Provenance { Gold, Generated };

struct FewShotBlock {
  ExamQuestion question;
  char shown_answer = 'A';
  std::optional<std::string> inference_detail;
  Provenance provenance = Provenance::Gold;
  std::size_t token_estimate = 0;
};

struct EnrichError : std::runtime_error {
  std::string example_id;
  EnrichError(std::string id, const std::string& message)
      : std::runtime_error("example '" + id + "': " + message),
        example_id(std::move(id)) {}
};

// Stem plus the five option lines; no answer line.
std::string render_question_block(const ExamQuestion& q);

// Question block, optional analysis line, and the final 答案 line. The
// token_estimate of a block always refers to this rendering.
std::string render_block(const FewShotBlock& block);

// Builds one demonstration. CorrectAns makes no LLM call; GeneratedAns and
// CorrectAnsPlusInference make exactly one. GeneratedCorrectAns goes through
// select_generated_correct instead (enrich rejects it).
FewShotBlock enrich(const ExamQuestion& example, Strategy strategy,
                    LlmClient& llm, const PromptTemplates& templates,
                    const LlmParams& params);

// Walks candidates in rank order, keeps those the model answers correctly,
// and stops after k keeps. Candidates whose generated answer is wrong or
// unparseable are skipped; the result may be shorter than k.
std::vector<FewShotBlock> select_generated_correct(
    const std::vector<ExamQuestion>& candidates, LlmClient& llm, std::size_t k,
    const PromptTemplates& templates, const LlmParams& params);

}  // namespace kfe
