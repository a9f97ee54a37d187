#include "kfe/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "kfe/utf8.hpp"

namespace kfe {

using nlohmann::json;

namespace {

// Characters allowed between an answer marker and the label it announces:
// connective words (是/为/应/选/项/择), colons, quotes, brackets, and the
// English "is" (i/s appear here so "answer is C" resolves).
bool is_connective(char32_t cp) {
  switch (cp) {
    case U' ': case U'\t': case U':': case U',': case U';':
    case U'i': case U's': case U'I': case U'S':
    case U'(': case U')': case U'"': case U'\'': case U'*':
    case 0xFF1A:  // ：
    case 0xFF0C:  // ，
    case 0x3001:  // 、
    case 0x201C: case 0x201D:  // “ ”
    case 0x300A: case 0x300B:  // 《 》
    case 0x3010: case 0x3011:  // 【 】
    case 0xFF08: case 0xFF09:  // （ ）
      return true;
    case 0x662F:  // 是
    case 0x4E3A:  // 为
    case 0x5E94:  // 应
    case 0x9009:  // 选
    case 0x9879:  // 项
    case 0x62E9:  // 择
      return true;
    default:
      return false;
  }
}

bool is_ascii_alnum(char32_t cp) {
  return (cp >= U'0' && cp <= U'9') || (cp >= U'a' && cp <= U'z') ||
         (cp >= U'A' && cp <= U'Z');
}

std::optional<char> as_label(char32_t cp) {
  if (cp >= U'A' && cp <= U'E') return static_cast<char>(cp);
  if (cp >= U'a' && cp <= U'e') return static_cast<char>(cp - U'a' + 'A');
  return std::nullopt;
}

// After a marker ending at code-point index `start`, skip up to six
// connective code points and accept a label whose successor is not an ASCII
// letter or digit.
std::optional<char> label_after(const std::vector<char32_t>& cps,
                                std::size_t start) {
  std::size_t i = start;
  std::size_t skipped = 0;
  while (i < cps.size() && skipped < 6 && is_connective(cps[i])) {
    ++i;
    ++skipped;
  }
  if (i >= cps.size()) return std::nullopt;
  auto label = as_label(cps[i]);
  if (!label) return std::nullopt;
  if (i + 1 < cps.size() && is_ascii_alnum(cps[i + 1])) return std::nullopt;
  return label;
}

char32_t ascii_lower_cp(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp - U'A' + U'a';
  return cp;
}

bool matches_at(const std::vector<char32_t>& cps, std::size_t pos,
                std::u32string_view marker) {
  if (pos + marker.size() > cps.size()) return false;
  for (std::size_t k = 0; k < marker.size(); ++k) {
    if (ascii_lower_cp(cps[pos + k]) != marker[k]) return false;
  }
  return true;
}

}  // namespace

std::optional<char> extract_answer(std::string_view response,
                                   const std::array<std::string, 5>& options) {
  const auto cps = utf8::decode(response);

  // Rule 1: last marker occurrence that announces a label.
  static constexpr std::u32string_view kMarkers[] = {U"答案", U"选", U"answer"};
  std::optional<char> marker_hit;
  std::size_t best_pos = 0;
  for (auto marker : kMarkers) {
    for (std::size_t pos = 0; pos + marker.size() <= cps.size(); ++pos) {
      if (!matches_at(cps, pos, marker)) continue;
      auto label = label_after(cps, pos + marker.size());
      if (label && (!marker_hit || pos >= best_pos)) {
        marker_hit = label;
        best_pos = pos;
      }
    }
  }
  if (marker_hit) return marker_hit;

  // Rule 2: the response is a bare label, modulo surrounding whitespace and
  // trailing sentence punctuation.
  {
    std::vector<char32_t> trimmed;
    for (char32_t cp : cps)
      if (!utf8::is_space(cp)) trimmed.push_back(cp);
    while (!trimmed.empty() && utf8::is_sentence_terminator(trimmed.back()))
      trimmed.pop_back();
    if (trimmed.size() == 1) {
      if (auto label = as_label(trimmed[0])) return label;
    }
  }

  // Rule 3: exactly one option text quoted verbatim.
  {
    std::optional<char> found;
    const std::string haystack(response);
    for (char label : kOptionLabels) {
      const std::string& opt = options[label_index(label)];
      if (opt.empty()) continue;
      if (haystack.find(opt) != std::string::npos) {
        if (found) return std::nullopt;  // ambiguous
        found = label;
      }
    }
    if (found) return found;
  }

  return std::nullopt;
}

std::size_t sentence_count(std::string_view text) {
  std::size_t count = 0;
  bool has_content = false;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = utf8::next(text, i);
    if (utf8::is_sentence_terminator(cp)) {
      if (has_content) ++count;
      has_content = false;
    } else if (!utf8::is_space(cp)) {
      has_content = true;
    }
  }
  if (has_content) ++count;
  return count;
}

std::string format_pct(std::size_t correct, std::size_t total) {
  if (total == 0) return "n/a";
  // Exact rational rounding: q = round_half_up(10000 * correct / total).
  const unsigned long long num = 10000ULL * correct;
  unsigned long long q = num / total;
  const unsigned long long r = num % total;
  if (2 * r >= total) ++q;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%llu.%02llu", q / 100, q % 100);
  return buf;
}

double pct_value(std::size_t correct, std::size_t total) {
  if (total == 0) return 0.0;
  const unsigned long long num = 10000ULL * correct;
  unsigned long long q = num / total;
  const unsigned long long r = num % total;
  if (2 * r >= total) ++q;
  return static_cast<double>(q) / 100.0;
}

ExamReport grade(const std::vector<ResultInput>& results,
                 const std::vector<ExamQuestion>& exam,
                 double pass_threshold) {
  std::unordered_map<std::string, const ResultInput*> by_id;
  for (const auto& r : results) {
    if (!by_id.emplace(r.question_id, &r).second)
      throw GradeError("duplicate result for question '" + r.question_id + "'");
  }

  ExamReport report;
  report.pass_threshold = pass_threshold;
  report.per_question.reserve(exam.size());

  for (const auto& q : exam) {
    if (!q.answer) throw GradeError("question '" + q.id + "' has no gold answer");
    if (!q.category) throw GradeError("question '" + q.id + "' has no category");
    auto it = by_id.find(q.id);
    if (it == by_id.end()) throw GradeError("no result for question '" + q.id + "'");
    const ResultInput& in = *it->second;

    QuestionResult qr;
    qr.question_id = q.id;
    qr.category = *q.category;
    qr.gold = *q.answer;
    qr.predicted = in.predicted;
    qr.correct = in.predicted && *in.predicted == qr.gold;
    qr.response_text = in.response_text;
    qr.sentence_count = kfe::sentence_count(in.response_text);
    qr.prompt_meta = in.prompt_meta;
    qr.error = in.error;

    if (qr.category == Category::MK) {
      ++report.n_mk;
      if (qr.correct) ++report.correct_mk;
    } else {
      ++report.n_ca;
      if (qr.correct) ++report.correct_ca;
    }
    report.per_question.push_back(std::move(qr));
  }
  report.passed =
      pct_value(report.correct_all(), report.n_all()) >= report.pass_threshold;
  return report;
}

std::vector<StepBucket> bucket_by_steps(const std::vector<QuestionResult>& results,
                                        std::size_t n_buckets) {
  if (results.empty()) throw GradeError("bucket_by_steps: no responses");
  if (n_buckets == 0) throw GradeError("bucket_by_steps: n_buckets must be >= 1");

  std::size_t lo = results.front().sentence_count;
  std::size_t hi = lo;
  for (const auto& r : results) {
    lo = std::min(lo, r.sentence_count);
    hi = std::max(hi, r.sentence_count);
  }

  if (lo == hi) {
    StepBucket b{static_cast<double>(lo), static_cast<double>(hi), 0, 0};
    for (const auto& r : results) {
      ++b.count;
      if (r.correct) ++b.correct;
    }
    return {b};
  }

  const std::size_t span = hi - lo;
  std::vector<StepBucket> buckets(n_buckets);
  for (std::size_t i = 0; i < n_buckets; ++i) {
    buckets[i].lo = lo + static_cast<double>(i) * span / n_buckets;
    buckets[i].hi = lo + static_cast<double>(i + 1) * span / n_buckets;
  }
  for (const auto& r : results) {
    // Integer form of ceil((c - lo) * n / span) - 1 with boundary ties going
    // to the lower bucket.
    const std::size_t offset = (r.sentence_count - lo) * n_buckets;
    std::size_t idx = offset == 0 ? 0 : (offset + span - 1) / span - 1;
    if (idx >= n_buckets) idx = n_buckets - 1;
    ++buckets[idx].count;
    if (r.correct) ++buckets[idx].correct;
  }
  return buckets;
}

namespace {

json meta_to_json(const PromptMeta& meta) {
  json dropped = json::array();
  for (const auto& [kind, id] : meta.dropped) dropped.push_back({kind, id});
  return json{{"shots", meta.shots}, {"knowledge", meta.knowledge}, {"dropped", dropped}};
}

PromptMeta meta_from_json(const json& j) {
  PromptMeta meta;
  meta.shots = j.at("shots").get<std::size_t>();
  meta.knowledge = j.at("knowledge").get<std::size_t>();
  for (const auto& d : j.at("dropped"))
    meta.dropped.emplace_back(d.at(0).get<std::string>(), d.at(1).get<std::string>());
  return meta;
}

json report_to_json(const ExamReport& report) {
  json per = json::array();
  for (const auto& q : report.per_question) {
    json jq{{"question_id", q.question_id},
            {"category", to_string(q.category)},
            {"gold", std::string(1, q.gold)},
            {"predicted", q.predicted ? json(std::string(1, *q.predicted)) : json(nullptr)},
            {"correct", q.correct},
            {"response_text", q.response_text},
            {"sentence_count", q.sentence_count},
            {"prompt_meta", meta_to_json(q.prompt_meta)},
            {"error", q.error}};
    per.push_back(std::move(jq));
  }
  json summary{{"n_mk", report.n_mk},
               {"n_ca", report.n_ca},
               {"n_all", report.n_all()},
               {"correct_mk", report.correct_mk},
               {"correct_ca", report.correct_ca},
               {"correct_all", report.correct_all()},
               {"acc_mk", pct_value(report.correct_mk, report.n_mk)},
               {"acc_ca", pct_value(report.correct_ca, report.n_ca)},
               {"acc_all", pct_value(report.correct_all(), report.n_all())},
               {"pass_threshold", report.pass_threshold},
               {"passed", report.passed}};
  return json{{"schema", "kfe-report/1"}, {"summary", summary}, {"per_question", per}};
}

}  // namespace

std::string report_to_json_string(const ExamReport& report) {
  return report_to_json(report).dump(2) + "\n";
}

void write_report(const ExamReport& report, const std::string& path,
                  ReportFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw GradeError("cannot write report to '" + path + "'");
  if (format == ReportFormat::Json) {
    out << report_to_json_string(report);
    return;
  }
  out << "question_id,category,gold,predicted,correct,sentence_count,shots,knowledge,dropped\n";
  for (const auto& q : report.per_question) {
    std::string dropped;
    for (const auto& [kind, id] : q.prompt_meta.dropped) {
      if (!dropped.empty()) dropped += ';';
      dropped += kind + ":" + id;
    }
    out << q.question_id << ',' << to_string(q.category) << ',' << q.gold << ','
        << (q.predicted ? std::string(1, *q.predicted) : std::string()) << ','
        << (q.correct ? 1 : 0) << ',' << q.sentence_count << ','
        << q.prompt_meta.shots << ',' << q.prompt_meta.knowledge << ',' << dropped
        << '\n';
  }
  out << "# summary: acc_mk=" << format_pct(report.correct_mk, report.n_mk)
      << " acc_ca=" << format_pct(report.correct_ca, report.n_ca)
      << " acc_all=" << format_pct(report.correct_all(), report.n_all())
      << " passed=" << (report.passed ? "true" : "false") << '\n';
}

ExamReport read_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GradeError("cannot read report from '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw GradeError("report '" + path + "' is not valid JSON");
  if (!j.contains("schema") || j["schema"] != "kfe-report/1")
    throw GradeError("report '" + path + "' has unsupported schema");

  ExamReport report;
  const auto& summary = j.at("summary");
  report.n_mk = summary.at("n_mk").get<std::size_t>();
  report.n_ca = summary.at("n_ca").get<std::size_t>();
  report.correct_mk = summary.at("correct_mk").get<std::size_t>();
  report.correct_ca = summary.at("correct_ca").get<std::size_t>();
  report.pass_threshold = summary.at("pass_threshold").get<double>();
  report.passed = summary.at("passed").get<bool>();
  for (const auto& jq : j.at("per_question")) {
    QuestionResult q;
    q.question_id = jq.at("question_id").get<std::string>();
    auto cat = category_from_string(jq.at("category").get<std::string>());
    if (!cat) throw GradeError("bad category in report");
    q.category = *cat;
    q.gold = jq.at("gold").get<std::string>().at(0);
    if (!jq.at("predicted").is_null())
      q.predicted = jq.at("predicted").get<std::string>().at(0);
    q.correct = jq.at("correct").get<bool>();
    q.response_text = jq.at("response_text").get<std::string>();
    q.sentence_count = jq.at("sentence_count").get<std::size_t>();
    q.prompt_meta = meta_from_json(jq.at("prompt_meta"));
    q.error = jq.at("error").get<std::string>();
    report.per_question.push_back(std::move(q));
  }
  return report;
}

std::string render_report_table(const ExamReport& report) {
  std::ostringstream out;
  char line[128];
  out << "category  correct  total  accuracy\n";
  std::snprintf(line, sizeof(line), "%-8s  %7zu  %5zu  %8s\n", "MK",
                report.correct_mk, report.n_mk,
                format_pct(report.correct_mk, report.n_mk).c_str());
  out << line;
  std::snprintf(line, sizeof(line), "%-8s  %7zu  %5zu  %8s\n", "CA",
                report.correct_ca, report.n_ca,
                format_pct(report.correct_ca, report.n_ca).c_str());
  out << line;
  std::snprintf(line, sizeof(line), "%-8s  %7zu  %5zu  %8s\n", "ALL",
                report.correct_all(), report.n_all(),
                format_pct(report.correct_all(), report.n_all()).c_str());
  out << line;
  std::snprintf(line, sizeof(line), "passed: %s (threshold %.2f)\n",
                report.passed ? "yes" : "no", report.pass_threshold);
  out << line;
  return out.str();
}

}  // namespace kfe
