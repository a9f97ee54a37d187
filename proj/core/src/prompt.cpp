#include "kfe/prompt.hpp"

namespace kfe {

std::string to_string(InstructionKind k) {
  return k == InstructionKind::Direct ? "direct" : "steps";
}

std::optional<InstructionKind> instruction_from_string(std::string_view s) {
  if (s == "direct") return InstructionKind::Direct;
  if (s == "steps") return InstructionKind::Steps;
  return std::nullopt;
}

namespace {

std::string render_prompt(const std::string& instruction,
                          const std::vector<KnowledgePiece>& knowledge,
                          std::size_t n_knowledge,
                          const std::vector<FewShotBlock>& shots,
                          std::size_t n_shots, const ExamQuestion& question,
                          const PromptTemplates& templates) {
  std::string text = instruction;
  if (n_knowledge > 0) {
    text += "\n\n" + templates.knowledge_header;
    for (std::size_t i = 0; i < n_knowledge; ++i) {
      text += '\n';
      text += knowledge[i].text;
    }
  }
  if (n_shots > 0) {
    text += "\n\n" + templates.examples_header;
    // Ascending relevance: the most relevant block ends up adjacent to the
    // target question.
    for (std::size_t i = n_shots; i-- > 0;) {
      text += '\n';
      text += render_block(shots[i]);
      text += '\n';
    }
  }
  text += "\n\n" + render_question_block(question);
  return text;
}

}  // namespace

AssembledPrompt assemble(InstructionKind instruction,
                         const std::vector<KnowledgePiece>& knowledge,
                         const std::vector<FewShotBlock>& shots,
                         const ExamQuestion& question, std::size_t budget,
                         std::size_t response_reserve,
                         const PromptTemplates& templates,
                         const TokenEstimator& estimator) {
  if (budget <= response_reserve)
    throw PromptError("budget must exceed response_reserve");
  const std::size_t limit = budget - response_reserve;
  const std::string& instruction_text = instruction == InstructionKind::Direct
                                            ? templates.direct_instruction
                                            : templates.steps_instruction;

  AssembledPrompt result;
  std::size_t n_shots = shots.size();
  std::size_t n_knowledge = knowledge.size();
  for (;;) {
    result.text = render_prompt(instruction_text, knowledge, n_knowledge, shots,
                                n_shots, question, templates);
    result.token_estimate = estimator(result.text);
    if (result.token_estimate <= limit) break;
    if (n_shots > 0) {
      --n_shots;  // lowest relevance first
      result.dropped.push_back({"shot", shots[n_shots].question.id});
    } else if (n_knowledge > 0) {
      --n_knowledge;  // last option slot first
      result.dropped.push_back({"knowledge", knowledge[n_knowledge].id});
    } else {
      throw PromptError("question exceeds budget");
    }
  }
  result.included_shots = n_shots;
  result.included_knowledge = n_knowledge;
  return result;
}

std::array<std::string, 5> self_inquiry_prompts(const ExamQuestion& question,
                                                const PromptTemplates& templates) {
  std::array<std::string, 5> prompts;
  for (char label : kOptionLabels) {
    prompts[label_index(label)] = fill_placeholder(
        templates.self_inquiry_query, "{option}", question.options[label_index(label)]);
  }
  return prompts;
}

AssembledPrompt assemble_self_inquiry_final(
    const ExamQuestion& question, const std::array<std::string, 5>& meanings,
    InstructionKind instruction, std::size_t budget, std::size_t response_reserve,
    const PromptTemplates& templates, const TokenEstimator& estimator) {
  std::vector<KnowledgePiece> pieces;
  for (char label : kOptionLabels) {
    const std::string& meaning = meanings[label_index(label)];
    if (meaning.empty()) continue;
    KnowledgePiece p;
    p.id = std::string("meaning:") + label;
    p.source = "self-inquiry";
    p.text = meaning;
    p.token_estimate = estimator(meaning);
    pieces.push_back(std::move(p));
  }
  return assemble(instruction, pieces, {}, question, budget, response_reserve,
                  templates, estimator);
}

}  // namespace kfe
