#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kfe/corpus.hpp"
#include "kfe/fewshot.hpp"
#include "kfe/templates.hpp"
#include "kfe/tokenizer.hpp"

namespace kfe {

enum class InstructionKind { Direct, Steps };

std::string to_string(InstructionKind k);
std::optional<InstructionKind> instruction_from_string(std::string_view s);

struct DroppedItem {
  std::string kind;  // "shot" or "knowledge"
  std::string id;
};

struct AssembledPrompt {
  std::string text;
  std::size_t token_estimate = 0;
  std::size_t included_shots = 0;
  std::size_t included_knowledge = 0;
  std::vector<DroppedItem> dropped;
};

struct PromptError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Assembles instruction, knowledge pieces (in option order), few-shot blocks,
// and the target question. Shots arrive in descending retrieval relevance and
// are rendered in ascending relevance so the most relevant sits next to the
// question. Under budget pressure the lowest-relevance shot goes first, then
// knowledge pieces from the last option slot backwards; the instruction and
// the target question are never dropped. Throws PromptError when even the
// bare instruction + question exceed the budget.
AssembledPrompt assemble(InstructionKind instruction,
                         const std::vector<KnowledgePiece>& knowledge,
                         const std::vector<FewShotBlock>& shots,
                         const ExamQuestion& question, std::size_t budget,
                         std::size_t response_reserve,
                         const PromptTemplates& templates,
                         const TokenEstimator& estimator = default_estimator());

// One meaning query per option, order A..E.
std::array<std::string, 5> self_inquiry_prompts(const ExamQuestion& question,
                                                const PromptTemplates& templates);

// Final self-inquiry prompt: the five generated meanings stand in for
// retrieved knowledge, same truncation policy. Blank meanings are skipped.
AssembledPrompt assemble_self_inquiry_final(
    const ExamQuestion& question, const std::array<std::string, 5>& meanings,
    InstructionKind instruction, std::size_t budget, std::size_t response_reserve,
    const PromptTemplates& templates,
    const TokenEstimator& estimator = default_estimator());

}  // namespace kfe
