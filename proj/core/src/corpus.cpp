#include "kfe/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kfe/utf8.hpp"

namespace kfe {

using nlohmann::json;

std::string to_string(Category c) {
  return c == Category::MK ? "MK" : "CA";
}

std::optional<Category> category_from_string(std::string_view s) {
  std::string up;
  up.reserve(s.size());
  for (char ch : s) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  if (up == "MK") return Category::MK;
  if (up == "CA") return Category::CA;
  return std::nullopt;
}

QuestionBank make_question_bank(std::vector<ExamQuestion> entries) {
  QuestionBank bank;
  bank.entries = std::move(entries);
  bank.by_id.reserve(bank.entries.size());
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    if (!bank.entries[i].answer)
      throw LoadError("question bank entry '" + bank.entries[i].id + "' has no gold answer");
    if (!bank.by_id.emplace(bank.entries[i].id, i).second)
      throw LoadError("duplicate question id '" + bank.entries[i].id + "'");
  }
  return bank;
}

KnowledgeBase make_knowledge_base(std::vector<KnowledgePiece> pieces) {
  KnowledgeBase base;
  base.pieces = std::move(pieces);
  base.by_id.reserve(base.pieces.size());
  for (std::size_t i = 0; i < base.pieces.size(); ++i) {
    if (!base.by_id.emplace(base.pieces[i].id, i).second)
      throw LoadError("duplicate knowledge piece id '" + base.pieces[i].id + "'");
  }
  return base;
}

namespace {

std::optional<char> parse_label(std::string_view s) {
  if (s.size() != 1) return std::nullopt;
  char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  if (c < 'A' || c > 'E') return std::nullopt;
  return c;
}

// Parses one question JSON object; returns a diagnostic message on failure.
std::optional<std::string> parse_question(const json& j, bool require_answer,
                                          ExamQuestion& out) {
  if (!j.is_object()) return "not a JSON object";
  if (!j.contains("id") || !j["id"].is_string()) return "missing string field 'id'";
  if (!j.contains("stem") || !j["stem"].is_string()) return "missing string field 'stem'";
  if (!j.contains("options") || !j["options"].is_object()) return "missing object field 'options'";

  out.id = j["id"].get<std::string>();
  out.stem = j["stem"].get<std::string>();
  if (out.id.empty()) return "empty id";
  if (out.stem.empty()) return "empty stem";

  const auto& opts = j["options"];
  if (opts.size() != 5)
    return "expected exactly 5 options, got " + std::to_string(opts.size());
  std::array<bool, 5> seen{};
  for (const auto& [key, value] : opts.items()) {
    auto label = parse_label(key);
    if (!label) return "invalid option label '" + key + "'";
    if (!value.is_string() || value.get<std::string>().empty())
      return "option '" + std::string(1, *label) + "' is empty or not a string";
    if (seen[label_index(*label)]) return "duplicate option label '" + std::string(1, *label) + "'";
    seen[label_index(*label)] = true;
    out.options[label_index(*label)] = value.get<std::string>();
  }

  out.answer.reset();
  if (j.contains("answer") && !j["answer"].is_null()) {
    if (!j["answer"].is_string()) return "field 'answer' must be a string";
    auto label = parse_label(j["answer"].get<std::string>());
    if (!label) return "answer '" + j["answer"].get<std::string>() + "' is not a label A-E";
    out.answer = label;
  }
  if (require_answer && !out.answer) return "missing answer field";

  out.category.reset();
  if (j.contains("category") && !j["category"].is_null()) {
    if (!j["category"].is_string()) return "field 'category' must be a string";
    auto cat = category_from_string(j["category"].get<std::string>());
    if (!cat) return "category '" + j["category"].get<std::string>() + "' is not MK or CA";
    out.category = cat;
  }
  return std::nullopt;
}

struct QuestionFileResult {
  std::vector<ExamQuestion> questions;
  std::vector<Diagnostic> rejected;
};

QuestionFileResult load_question_file(const std::string& path, bool require_answer) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path + "'");

  QuestionFileResult result;
  std::unordered_map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      result.rejected.push_back({lineno, "invalid JSON"});
      continue;
    }
    ExamQuestion q;
    if (auto err = parse_question(j, require_answer, q)) {
      result.rejected.push_back({lineno, *err});
      continue;
    }
    auto [it, inserted] = first_line.emplace(q.id, lineno);
    if (!inserted) {
      throw LoadError("duplicate question id '" + q.id + "' at lines " +
                      std::to_string(it->second) + " and " + std::to_string(lineno) +
                      " in '" + path + "'");
    }
    result.questions.push_back(std::move(q));
  }
  return result;
}

}  // namespace

BankLoadResult load_question_bank(const std::string& path) {
  auto file = load_question_file(path, /*require_answer=*/true);
  BankLoadResult result;
  result.rejected = std::move(file.rejected);
  result.bank = make_question_bank(std::move(file.questions));
  return result;
}

ExamLoadResult load_exam(const std::string& path) {
  auto file = load_question_file(path, /*require_answer=*/false);
  ExamLoadResult result;
  result.questions = std::move(file.questions);
  result.diagnostics = std::move(file.rejected);
  for (const auto& q : result.questions) {
    if (!q.category) {
      ++result.n_uncategorized;
    } else if (*q.category == Category::MK) {
      ++result.n_mk;
    } else {
      ++result.n_ca;
    }
  }
  if (result.questions.empty())
    result.diagnostics.push_back({0, "empty exam file '" + path + "'"});
  return result;
}

KnowledgeLoadResult load_knowledge(const std::string& path,
                                   const TokenEstimator& estimator) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path + "'");

  KnowledgeLoadResult result;
  std::vector<KnowledgePiece> pieces;
  std::unordered_map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      result.rejected.push_back({lineno, "invalid JSON"});
      continue;
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() ||
        !j.contains("source") || !j["source"].is_string() ||
        !j.contains("text") || !j["text"].is_string()) {
      result.rejected.push_back({lineno, "expected object with string id/source/text"});
      continue;
    }
    KnowledgePiece p;
    p.id = j["id"].get<std::string>();
    p.source = j["source"].get<std::string>();
    p.text = j["text"].get<std::string>();
    p.token_estimate = estimator(p.text);
    if (p.id.empty() || p.text.empty() || p.token_estimate == 0) {
      result.rejected.push_back({lineno, "empty id or blank text"});
      continue;
    }
    auto [it, inserted] = first_line.emplace(p.id, lineno);
    if (!inserted) {
      throw LoadError("duplicate knowledge piece id '" + p.id + "' at lines " +
                      std::to_string(it->second) + " and " + std::to_string(lineno) +
                      " in '" + path + "'");
    }
    pieces.push_back(std::move(p));
  }
  result.base = make_knowledge_base(std::move(pieces));
  return result;
}

namespace {

json question_to_json(const ExamQuestion& q) {
  json opts = json::object();
  for (char label : kOptionLabels)
    opts[std::string(1, label)] = q.options[label_index(label)];
  json j{{"id", q.id}, {"stem", q.stem}, {"options", opts}};
  if (q.answer) j["answer"] = std::string(1, *q.answer);
  if (q.category) j["category"] = to_string(*q.category);
  return j;
}

}  // namespace

void write_question_jsonl(const std::vector<ExamQuestion>& questions,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write '" + path + "'");
  for (const auto& q : questions) out << question_to_json(q).dump() << '\n';
}

void write_knowledge_jsonl(const std::vector<KnowledgePiece>& pieces,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write '" + path + "'");
  for (const auto& p : pieces) {
    json j{{"id", p.id}, {"source", p.source}, {"text", p.text}};
    out << j.dump() << '\n';
  }
}

StructuredDocument parse_structured_text(std::string_view text,
                                         std::string source_id) {
  StructuredDocument doc;
  doc.source_id = std::move(source_id);

  std::vector<std::string> path;
  std::string paragraph;
  auto flush = [&] {
    if (!paragraph.empty()) {
      doc.units.push_back({path, paragraph});
      paragraph.clear();
    }
  };

  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t level = 0;
    while (level < line.size() && line[level] == '#') ++level;
    if (level > 0) {
      flush();
      std::string title = line.substr(level);
      std::size_t start = title.find_first_not_of(" \t");
      title = start == std::string::npos ? std::string() : title.substr(start);
      path.resize(level - 1);
      path.push_back(title);
      continue;
    }
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    if (!paragraph.empty()) paragraph.push_back(' ');
    paragraph += line;
  }
  flush();
  return doc;
}

namespace {

// Lossless sentence partition: terminator runs stay attached to the
// preceding sentence, so concatenation reproduces the input.
std::vector<std::string> split_sentences_keep(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  std::size_t i = 0;
  bool in_terminator = false;
  while (i < text.size()) {
    const std::size_t start = i;
    const char32_t cp = utf8::next(text, i);
    const bool term = utf8::is_sentence_terminator(cp);
    if (in_terminator && !term) {
      out.push_back(current);
      current.clear();
    }
    in_terminator = term;
    current.append(text.substr(start, i - start));
  }
  if (!current.empty()) out.push_back(current);
  return out;
}

std::string join_heading(const StructuredDocument& doc,
                         const std::vector<std::string>& path) {
  std::string s = doc.source_id;
  if (path.empty()) return s;
  s += '#';
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0) s += '/';
    s += path[i];
  }
  return s;
}

}  // namespace

std::vector<KnowledgePiece> chunk_document(const StructuredDocument& doc,
                                           std::size_t target_tokens,
                                           const TokenEstimator& estimator) {
  if (target_tokens < 16)
    throw std::invalid_argument("target_tokens must be >= 16");
  const std::size_t cap = 2 * target_tokens;

  std::vector<KnowledgePiece> pieces;
  std::string current_text;
  std::size_t current_tokens = 0;
  const std::vector<std::string>* current_path = nullptr;

  auto flush = [&] {
    if (current_text.empty()) return;
    KnowledgePiece p;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "-%04zu", pieces.size() + 1);
    p.id = doc.source_id + buf;
    p.source = join_heading(doc, *current_path);
    p.text = current_text;
    p.token_estimate = current_tokens;
    pieces.push_back(std::move(p));
    current_text.clear();
    current_tokens = 0;
  };

  // Emits text known to fit under the cap, merging greedily up to target.
  auto add_fragment = [&](const std::string& fragment, std::size_t tokens) {
    if (!current_text.empty() &&
        (current_tokens >= target_tokens || current_tokens + tokens > cap)) {
      flush();
    }
    if (current_text.empty()) {
      current_text = fragment;
      current_tokens = tokens;
    } else {
      current_text += '\n';
      current_text += fragment;
      current_tokens += tokens;  // exact: '\n' separates estimator segments
    }
  };

  // Splits an oversized sentence at code-point boundaries as a last resort.
  auto add_hard_split = [&](const std::string& sentence) {
    std::string part;
    std::size_t part_tokens = 0;
    std::size_t i = 0;
    while (i < sentence.size()) {
      const std::size_t start = i;
      utf8::next(sentence, i);
      part.append(sentence, start, i - start);
      part_tokens = estimator(part);
      if (part_tokens >= target_tokens) {
        add_fragment(part, part_tokens);
        part.clear();
        part_tokens = 0;
      }
    }
    if (!part.empty()) add_fragment(part, estimator(part));
  };

  for (const auto& unit : doc.units) {
    if (current_path && unit.heading_path != *current_path) flush();
    current_path = &unit.heading_path;

    const std::size_t tokens = estimator(unit.paragraph);
    if (tokens == 0) continue;
    if (tokens <= cap) {
      add_fragment(unit.paragraph, tokens);
      continue;
    }
    // Oversized paragraph: fall back to sentence boundaries.
    for (const auto& sentence : split_sentences_keep(unit.paragraph)) {
      const std::size_t st = estimator(sentence);
      if (st == 0) continue;
      if (st <= cap) {
        add_fragment(sentence, st);
      } else {
        add_hard_split(sentence);
      }
    }
  }
  if (current_path) flush();
  return pieces;
}

}  // namespace kfe
