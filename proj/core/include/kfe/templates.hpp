#pragma once

#include <string>
#include <string_view>

namespace kfe {

// Every string the pipeline ever sends to the model, in one place. The exam
// is Chinese, so the defaults are Chinese renderings of the task
// instructions. All of them can be overridden from a JSON config file
// (key -> template string) without rebuilding.
struct PromptTemplates {
  // Task instructions for the final question.
  std::string direct_instruction =
      "以下是一道医学知识多项选择题，请根据题目输出唯一正确的答案。";
  std::string steps_instruction =
      "以下是一道医学知识多项选择题，请逐步分析并推导出最可能的答案。";

  // Section headers inside the assembled prompt.
  std::string knowledge_header = "背景知识：";
  std::string examples_header = "示例：";

  // Sent when generating an answer for a retrieved example.
  std::string generated_answer_instruction =
      "以下是一道医学知识多项选择题，请根据题目输出唯一正确的答案。";

  // Sent when generating inference detail; {answer} is the gold label.
  std::string inference_request =
      "以下是一道医学知识多项选择题，正确答案是{answer}。"
      "请逐步解释为什么{answer}是正确答案。";

  // Self-inquiry meaning query; {option} is the option text.
  std::string self_inquiry_query = "“{option}”是什么意思？";
};

PromptTemplates default_templates();

// Loads overrides from a JSON object file; unknown keys are an error, missing
// keys keep their defaults.
PromptTemplates load_templates(const std::string& path);

// Replaces every occurrence of `placeholder` (written with braces, e.g.
// "{answer}") in `text`.
std::string fill_placeholder(std::string text, std::string_view placeholder,
                             std::string_view value);

}  // namespace kfe
