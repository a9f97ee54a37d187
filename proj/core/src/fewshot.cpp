#include "kfe/fewshot.hpp"

#include "kfe/eval.hpp"
#include "kfe/tokenizer.hpp"

namespace kfe {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::CorrectAns: return "correct_ans";
    case Strategy::GeneratedAns: return "generated_ans";
    case Strategy::GeneratedCorrectAns: return "generated_correct_ans";
    case Strategy::CorrectAnsPlusInference: return "correct_ans_plus_inference";
  }
  return "correct_ans";
}

std::optional<Strategy> strategy_from_string(std::string_view s) {
  if (s == "correct_ans") return Strategy::CorrectAns;
  if (s == "generated_ans") return Strategy::GeneratedAns;
  if (s == "generated_correct_ans") return Strategy::GeneratedCorrectAns;
  if (s == "correct_ans_plus_inference") return Strategy::CorrectAnsPlusInference;
  return std::nullopt;
}

std::string render_question_block(const ExamQuestion& q) {
  std::string out = "题目：" + q.stem + "\n";
  for (char label : kOptionLabels) {
    out += label;
    out += ". ";
    out += q.options[label_index(label)];
    out += '\n';
  }
  out.pop_back();  // no trailing newline
  return out;
}

std::string render_block(const FewShotBlock& block) {
  std::string out = render_question_block(block.question);
  out += '\n';
  if (block.inference_detail) {
    out += "分析：" + *block.inference_detail + "\n";
  }
  out += "答案：";
  out += block.shown_answer;
  return out;
}

namespace {

FewShotBlock finish_block(FewShotBlock block) {
  block.token_estimate = estimate_tokens(render_block(block));
  return block;
}

// One generation call for an example; returns the extracted label.
std::optional<char> generate_answer(const ExamQuestion& example, LlmClient& llm,
                                    const PromptTemplates& templates,
                                    const LlmParams& params) {
  const std::string prompt = templates.generated_answer_instruction + "\n\n" +
                             render_question_block(example);
  const LlmResponse response = llm.complete(prompt, params);
  return extract_answer(response.text, example.options);
}

}  // namespace

FewShotBlock enrich(const ExamQuestion& example, Strategy strategy,
                    LlmClient& llm, const PromptTemplates& templates,
                    const LlmParams& params) {
  if (strategy != Strategy::GeneratedAns && !example.answer)
    throw EnrichError(example.id, "no gold answer");

  FewShotBlock block;
  block.question = example;

  switch (strategy) {
    case Strategy::CorrectAns:
      block.shown_answer = *example.answer;
      block.provenance = Provenance::Gold;
      return finish_block(std::move(block));

    case Strategy::GeneratedAns: {
      std::optional<char> label;
      try {
        label = generate_answer(example, llm, templates, params);
      } catch (const LlmError& e) {
        throw EnrichError(example.id, e.what());
      }
      if (!label) throw EnrichError(example.id, "no answer parsed");
      block.shown_answer = *label;
      block.provenance = Provenance::Generated;
      return finish_block(std::move(block));
    }

    case Strategy::GeneratedCorrectAns:
      throw EnrichError(example.id,
                        "generated_correct_ans enriches via select_generated_correct");

    case Strategy::CorrectAnsPlusInference: {
      const std::string answer(1, *example.answer);
      const std::string prompt =
          fill_placeholder(templates.inference_request, "{answer}", answer) +
          "\n\n" + render_question_block(example);
      LlmResponse response;
      try {
        response = llm.complete(prompt, params);
      } catch (const LlmError& e) {
        throw EnrichError(example.id, e.what());
      }
      block.shown_answer = *example.answer;
      block.inference_detail = response.text;
      block.provenance = Provenance::Gold;
      return finish_block(std::move(block));
    }
  }
  throw EnrichError(example.id, "unknown strategy");
}

std::vector<FewShotBlock> select_generated_correct(
    const std::vector<ExamQuestion>& candidates, LlmClient& llm, std::size_t k,
    const PromptTemplates& templates, const LlmParams& params) {
  std::vector<FewShotBlock> kept;
  for (const auto& candidate : candidates) {
    if (kept.size() >= k) break;
    if (!candidate.answer) throw EnrichError(candidate.id, "no gold answer");
    const auto label = generate_answer(candidate, llm, templates, params);
    if (!label || *label != *candidate.answer) continue;
    FewShotBlock block;
    block.question = candidate;
    block.shown_answer = *candidate.answer;
    block.provenance = Provenance::Generated;
    kept.push_back(finish_block(std::move(block)));
  }
  return kept;
}

}  // namespace kfe
