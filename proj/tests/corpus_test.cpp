#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "kfe/corpus.hpp"
#include "kfe/tokenizer.hpp"
#include "kfe/utf8.hpp"

using namespace kfe;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "kfe_corpus_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_lines(const std::filesystem::path& path,
                 const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& line : lines) out << line << '\n';
}

std::string q_line(const std::string& id, const std::string& stem,
                   const std::string& answer = "A",
                   const std::string& category = "MK") {
  std::string j = R"({"id":")" + id + R"(","stem":")" + stem +
                  R"(","options":{"A":"甲","B":"乙","C":"丙","D":"丁","E":"戊"})";
  if (!answer.empty()) j += R"(,"answer":")" + answer + R"(")";
  if (!category.empty()) j += R"(,"category":")" + category + R"(")";
  j += "}";
  return j;
}

// Independent greedy-chunker oracle: same stated policy, written separately
// against the spec wording instead of the implementation.
std::vector<std::size_t> oracle_chunk_sizes(const StructuredDocument& doc,
                                            std::size_t target) {
  const std::size_t cap = 2 * target;
  std::vector<std::size_t> sizes;
  std::size_t current = 0;
  const std::vector<std::string>* path = nullptr;
  auto flush = [&] {
    if (current > 0) sizes.push_back(current);
    current = 0;
  };
  for (const auto& unit : doc.units) {
    if (path && unit.heading_path != *path) flush();
    path = &unit.heading_path;
    const std::size_t tokens = estimate_tokens(unit.paragraph);
    if (tokens == 0) continue;
    REQUIRE(tokens <= cap);  // the fixture has no oversized paragraphs
    if (current > 0 && (current >= target || current + tokens > cap)) flush();
    current += tokens;
  }
  flush();
  return sizes;
}

StructuredDocument synthetic_book(std::size_t paragraphs, std::size_t headings,
                                  std::mt19937_64& rng) {
  StructuredDocument doc;
  doc.source_id = "bk";
  std::vector<std::string> path;
  for (std::size_t i = 0; i < paragraphs; ++i) {
    if (i % (paragraphs / headings) == 0) {
      path = {"章" + std::to_string(i / (paragraphs / headings)),
              "节" + std::to_string(rng() % 3)};
    }
    // ~65 tokens: 55-75 CJK characters drawn from a small pool.
    std::string text;
    const std::size_t len = 55 + rng() % 21;
    for (std::size_t c = 0; c < len; ++c)
      utf8::append(text, static_cast<char32_t>(0x75C5 + rng() % 200));
    doc.units.push_back({path, text});
  }
  return doc;
}

}  // namespace

TEST_CASE("chunk_document: empty document") {
  CHECK(chunk_document({"bk", {}}, 130).empty());
}

TEST_CASE("chunk_document: single small paragraph stays one piece") {
  StructuredDocument doc{"bk", {}};
  std::string text;
  for (int i = 0; i < 50; ++i) utf8::append(text, static_cast<char32_t>(0x4E00 + i));
  doc.units.push_back({{"第一章"}, text});
  const auto pieces = chunk_document(doc, 130);
  REQUIRE(pieces.size() == 1);
  CHECK(pieces[0].text == text);
  CHECK(pieces[0].token_estimate == 50);
  CHECK(pieces[0].source == "bk#第一章");
  CHECK(pieces[0].id == "bk-0001");
}

TEST_CASE("chunk_document: synthetic book matches the oracle chunker") {
  std::mt19937_64 rng(7);
  const auto doc = synthetic_book(300, 30, rng);
  const auto expected = oracle_chunk_sizes(doc, 130);
  const auto pieces = chunk_document(doc, 130);
  REQUIRE(pieces.size() == expected.size());
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    CHECK(pieces[i].token_estimate == expected[i]);
    CHECK(pieces[i].token_estimate <= 2 * 130);
    CHECK(pieces[i].token_estimate == estimate_tokens(pieces[i].text));
  }
}

TEST_CASE("chunk_document: coverage modulo whitespace") {
  std::mt19937_64 rng(11);
  const auto doc = synthetic_book(60, 6, rng);
  const auto pieces = chunk_document(doc, 130);
  auto strip_ws = [](const std::string& s) {
    std::string out;
    std::size_t i = 0;
    while (i < s.size()) {
      const std::size_t start = i;
      if (!utf8::is_space(utf8::next(s, i))) out.append(s, start, i - start);
    }
    return out;
  };
  std::string original, chunked;
  for (const auto& u : doc.units) original += strip_ws(u.paragraph);
  for (const auto& p : pieces) chunked += strip_ws(p.text);
  CHECK(original == chunked);
}

TEST_CASE("chunk_document: oversized paragraph splits at sentence boundaries") {
  StructuredDocument doc{"bk", {}};
  std::string text;
  for (int s = 0; s < 40; ++s) {
    for (int c = 0; c < 12; ++c) utf8::append(text, static_cast<char32_t>(0x4E00 + s * 13 + c));
    text += "。";
  }
  doc.units.push_back({{"章"}, text});  // ~520 tokens, cap is 64
  const auto pieces = chunk_document(doc, 32);
  CHECK(pieces.size() > 1);
  for (const auto& p : pieces) CHECK(p.token_estimate <= 64);
  // every sentence terminator survives
  std::string merged;
  for (const auto& p : pieces) merged += p.text;
  std::size_t terminators = 0;
  std::size_t i = 0;
  while (i < merged.size())
    if (utf8::is_sentence_terminator(utf8::next(merged, i))) ++terminators;
  CHECK(terminators == 40);
}

TEST_CASE("chunk_document rejects tiny targets") {
  CHECK_THROWS_AS(chunk_document({"bk", {}}, 15), std::invalid_argument);
}

TEST_CASE("parse_structured_text builds heading paths") {
  const auto doc = parse_structured_text(
      "# 内科\n\n第一段。\n## 心血管\n第二段，\n跨行。\n\n第三段。\n", "bk");
  REQUIRE(doc.units.size() == 3);
  CHECK(doc.units[0].heading_path == std::vector<std::string>{"内科"});
  CHECK(doc.units[1].heading_path == std::vector<std::string>{"内科", "心血管"});
  CHECK(doc.units[1].paragraph == "第二段， 跨行。");
  CHECK(doc.units[2].paragraph == "第三段。");
}

TEST_CASE("load_question_bank happy path") {
  const auto path = temp_file("bank_ok.jsonl");
  write_lines(path, {q_line("q1", "题一"), q_line("q2", "题二", "B"),
                     q_line("q3", "题三", "E", "CA")});
  const auto result = load_question_bank(path.string());
  CHECK(result.rejected.empty());
  REQUIRE(result.bank.entries.size() == 3);
  CHECK(result.bank.entries[1].answer == 'B');
  CHECK(result.bank.by_id.at("q3") == 2);
}

TEST_CASE("load_question_bank rejects bad lines with line numbers") {
  const auto path = temp_file("bank_bad.jsonl");
  std::string four_options =
      R"({"id":"q2","stem":"题","options":{"A":"甲","B":"乙","C":"丙","D":"丁"},"answer":"A"})";
  write_lines(path, {q_line("q1", "题一"), four_options,
                     q_line("q3", "题三", /*answer=*/"", "MK")});
  const auto result = load_question_bank(path.string());
  CHECK(result.bank.entries.size() == 1);
  REQUIRE(result.rejected.size() == 2);
  CHECK(result.rejected[0].line == 2);
  CHECK(result.rejected[0].message.find("5 options") != std::string::npos);
  CHECK(result.rejected[1].line == 3);
  CHECK(result.rejected[1].message.find("answer") != std::string::npos);
}

TEST_CASE("load_question_bank fails on duplicate ids naming both lines") {
  const auto path = temp_file("bank_dup.jsonl");
  write_lines(path, {q_line("q1", "题一"), q_line("q1", "题一再")});
  try {
    load_question_bank(path.string());
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("q1") != std::string::npos);
    CHECK(msg.find('1') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
  }
}

TEST_CASE("load_exam counts categories and allows missing answers") {
  const auto path = temp_file("exam.jsonl");
  std::vector<std::string> lines;
  for (int i = 0; i < 8; ++i)
    lines.push_back(q_line("mk" + std::to_string(i), "题", "A", "MK"));
  for (int i = 0; i < 12; ++i)
    lines.push_back(q_line("ca" + std::to_string(i), "题", "B", "CA"));
  write_lines(path, lines);
  const auto result = load_exam(path.string());
  CHECK(result.questions.size() == 20);
  CHECK(result.n_mk == 8);
  CHECK(result.n_ca == 12);
  CHECK(result.diagnostics.empty());
}

TEST_CASE("load_exam on empty file warns") {
  const auto path = temp_file("exam_empty.jsonl");
  write_lines(path, {});
  const auto result = load_exam(path.string());
  CHECK(result.questions.empty());
  REQUIRE(result.diagnostics.size() == 1);
  CHECK(result.diagnostics[0].message.find("empty") != std::string::npos);
}

TEST_CASE("question loader round-trips") {
  const auto path = temp_file("roundtrip.jsonl");
  write_lines(path, {q_line("q1", "题一", "C", "CA"), q_line("q2", "题二", "D", "")});
  const auto first = load_exam(path.string());
  const auto out = temp_file("roundtrip_out.jsonl");
  write_question_jsonl(first.questions, out.string());
  const auto second = load_exam(out.string());
  REQUIRE(first.questions.size() == second.questions.size());
  for (std::size_t i = 0; i < first.questions.size(); ++i) {
    const auto& a = first.questions[i];
    const auto& b = second.questions[i];
    CHECK(a.id == b.id);
    CHECK(a.stem == b.stem);
    CHECK(a.options == b.options);
    CHECK(a.answer == b.answer);
    CHECK(a.category == b.category);
  }
}

TEST_CASE("knowledge loader round-trips and computes estimates") {
  const auto path = temp_file("knowledge.jsonl");
  write_lines(path, {R"({"id":"k1","source":"bk#一","text":"高血压的诊断标准。"})",
                     R"({"id":"k2","source":"bk#二","text":"糖尿病的治疗原则。"})"});
  const auto loaded = load_knowledge(path.string());
  CHECK(loaded.rejected.empty());
  REQUIRE(loaded.base.pieces.size() == 2);
  CHECK(loaded.base.pieces[0].token_estimate ==
        estimate_tokens(loaded.base.pieces[0].text));
  const auto out = temp_file("knowledge_out.jsonl");
  write_knowledge_jsonl(loaded.base.pieces, out.string());
  const auto again = load_knowledge(out.string());
  REQUIRE(again.base.pieces.size() == 2);
  CHECK(again.base.pieces[0].text == loaded.base.pieces[0].text);
  CHECK(again.base.pieces[1].source == loaded.base.pieces[1].source);
}

TEST_CASE("option labels normalize to uppercase") {
  const auto path = temp_file("lowercase.jsonl");
  write_lines(path,
              {R"({"id":"q1","stem":"题","options":{"a":"甲","b":"乙","c":"丙","d":"丁","e":"戊"},"answer":"c","category":"mk"})"});
  const auto result = load_question_bank(path.string());
  REQUIRE(result.bank.entries.size() == 1);
  CHECK(result.bank.entries[0].options[0] == "甲");
  CHECK(result.bank.entries[0].answer == 'C');
  CHECK(result.bank.entries[0].category == Category::MK);
}
