#include "kfe/templates.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace kfe {

using nlohmann::json;

PromptTemplates default_templates() { return PromptTemplates{}; }

PromptTemplates load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open templates file '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw std::runtime_error("templates file '" + path + "' is not a JSON object");

  PromptTemplates t;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string())
      throw std::runtime_error("template '" + key + "' must be a string");
    const std::string s = value.get<std::string>();
    if (key == "direct_instruction") {
      t.direct_instruction = s;
    } else if (key == "steps_instruction") {
      t.steps_instruction = s;
    } else if (key == "knowledge_header") {
      t.knowledge_header = s;
    } else if (key == "examples_header") {
      t.examples_header = s;
    } else if (key == "generated_answer_instruction") {
      t.generated_answer_instruction = s;
    } else if (key == "inference_request") {
      t.inference_request = s;
    } else if (key == "self_inquiry_query") {
      t.self_inquiry_query = s;
    } else {
      throw std::runtime_error("unknown template key '" + key + "'");
    }
  }
  return t;
}

std::string fill_placeholder(std::string text, std::string_view placeholder,
                             std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(placeholder, pos)) != std::string::npos) {
    text.replace(pos, placeholder.size(), value);
    pos += value.size();
  }
  return text;
}

}  // namespace kfe
