#include "kfe/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace kfe {

using nlohmann::json;

RetrievalIndex RetrievalIndex::build(
    const std::vector<std::pair<std::string, std::string>>& docs,
    Bm25Params params) {
  if (docs.empty()) throw IndexError("empty corpus");
  if (params.k1 <= 0.0 || params.b < 0.0 || params.b > 1.0)
    throw IndexError("invalid BM25 parameters");

  RetrievalIndex index;
  index.params_ = params;
  index.doc_ids_.reserve(docs.size());
  for (const auto& [id, text] : docs) index.doc_ids_.push_back(id);
  std::sort(index.doc_ids_.begin(), index.doc_ids_.end());
  for (std::size_t i = 0; i + 1 < index.doc_ids_.size(); ++i) {
    if (index.doc_ids_[i] == index.doc_ids_[i + 1])
      throw IndexError("duplicate document id '" + index.doc_ids_[i] + "'");
  }
  index.id_to_idx_.reserve(index.doc_ids_.size());
  for (std::uint32_t i = 0; i < index.doc_ids_.size(); ++i)
    index.id_to_idx_.emplace(index.doc_ids_[i], i);

  index.doc_lengths_.assign(docs.size(), 0);
  std::uint64_t total_length = 0;
  for (const auto& [id, text] : docs) {
    const std::uint32_t idx = index.id_to_idx_.at(id);
    const auto tokens = tokenize(text);
    index.doc_lengths_[idx] = static_cast<std::uint32_t>(tokens.size());
    total_length += tokens.size();

    std::unordered_map<std::string, std::uint32_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, freq] : tf)
      index.postings_[term].emplace_back(idx, freq);
  }
  for (auto& [term, list] : index.postings_)
    std::sort(list.begin(), list.end());
  index.avg_doc_length_ =
      static_cast<double>(total_length) / static_cast<double>(docs.size());
  return index;
}

RetrievalIndex RetrievalIndex::from_parts(
    std::vector<std::string> doc_ids, std::vector<std::uint32_t> doc_lengths,
    std::unordered_map<std::string, PostingList> postings, Bm25Params params) {
  if (doc_ids.empty()) throw IndexError("empty corpus");
  if (doc_lengths.size() != doc_ids.size())
    throw IndexError("doc_lengths size mismatch");
  if (!std::is_sorted(doc_ids.begin(), doc_ids.end()))
    throw IndexError("doc ids not sorted");

  RetrievalIndex index;
  index.params_ = params;
  index.doc_ids_ = std::move(doc_ids);
  index.doc_lengths_ = std::move(doc_lengths);
  index.postings_ = std::move(postings);
  index.id_to_idx_.reserve(index.doc_ids_.size());
  for (std::uint32_t i = 0; i < index.doc_ids_.size(); ++i) {
    if (!index.id_to_idx_.emplace(index.doc_ids_[i], i).second)
      throw IndexError("duplicate document id '" + index.doc_ids_[i] + "'");
  }
  std::uint64_t total_length = 0;
  for (auto len : index.doc_lengths_) total_length += len;
  index.avg_doc_length_ =
      static_cast<double>(total_length) / static_cast<double>(index.doc_ids_.size());
  for (const auto& [term, list] : index.postings_) {
    for (const auto& [doc, tf] : list) {
      if (doc >= index.doc_ids_.size())
        throw IndexError("posting references unknown document");
      if (tf == 0) throw IndexError("posting with zero frequency");
    }
    if (!std::is_sorted(list.begin(), list.end()))
      throw IndexError("posting list not sorted");
  }
  return index;
}

double RetrievalIndex::score_by_index(const std::vector<Token>& query_tokens,
                                      std::uint32_t doc) const {
  const double n = static_cast<double>(doc_count());
  const double dl = doc_lengths_[doc];
  const double norm = params_.k1 * (1.0 - params_.b + params_.b * dl / avg_doc_length_);
  double total = 0.0;
  for (const auto& t : query_tokens) {
    auto it = postings_.find(t);
    if (it == postings_.end()) continue;
    const auto& list = it->second;
    auto pos = std::lower_bound(list.begin(), list.end(),
                                std::make_pair(doc, std::uint32_t{0}));
    if (pos == list.end() || pos->first != doc) continue;
    const double tf = pos->second;
    const double df = static_cast<double>(list.size());
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    total += idf * tf * (params_.k1 + 1.0) / (tf + norm);
  }
  return total;
}

double RetrievalIndex::score(const std::vector<Token>& query_tokens,
                             const std::string& doc_id) const {
  auto it = id_to_idx_.find(doc_id);
  if (it == id_to_idx_.end())
    throw IndexError("unknown document id '" + doc_id + "'");
  return score_by_index(query_tokens, it->second);
}

std::vector<ScoredHit> RetrievalIndex::top_k(
    std::string_view query_text, std::size_t k,
    const std::unordered_set<std::string>& exclude) const {
  if (k == 0) throw IndexError("top_k requires k >= 1");
  const auto query_tokens = tokenize(query_text);

  // Term-at-a-time accumulation. Each document's contributions are added in
  // query-token order, which keeps the floating-point sums bit-identical to
  // score() and to a per-document brute-force loop.
  std::vector<double> acc(doc_count(), 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<char> seen(doc_count(), 0);
  const double n = static_cast<double>(doc_count());
  for (const auto& t : query_tokens) {
    auto it = postings_.find(t);
    if (it == postings_.end()) continue;
    const auto& list = it->second;
    const double df = static_cast<double>(list.size());
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (const auto& [doc, tf_u] : list) {
      const double dl = doc_lengths_[doc];
      const double norm =
          params_.k1 * (1.0 - params_.b + params_.b * dl / avg_doc_length_);
      const double tf = tf_u;
      acc[doc] += idf * tf * (params_.k1 + 1.0) / (tf + norm);
      if (!seen[doc]) {
        seen[doc] = 1;
        touched.push_back(doc);
      }
    }
  }

  std::vector<std::uint32_t> candidates;
  candidates.reserve(touched.size());
  for (auto doc : touched) {
    if (acc[doc] <= 0.0) continue;
    if (exclude.count(doc_ids_[doc])) continue;
    candidates.push_back(doc);
  }
  std::sort(candidates.begin(), candidates.end(),
            [&](std::uint32_t a, std::uint32_t b) {
              if (acc[a] != acc[b]) return acc[a] > acc[b];
              return a < b;  // doc index order == id order
            });
  if (candidates.size() > k) candidates.resize(k);

  std::vector<ScoredHit> hits;
  hits.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    hits.push_back({doc_ids_[candidates[i]], acc[candidates[i]], i + 1});
  return hits;
}

std::array<KnowledgeHit, 5> retrieve_knowledge(const RetrievalIndex& index,
                                               const KnowledgeBase& base,
                                               const ExamQuestion& question) {
  std::array<KnowledgeHit, 5> result;
  for (char label : kOptionLabels) {
    KnowledgeHit& slot = result[label_index(label)];
    slot.label = label;
    const std::string query =
        question.stem + " " + question.options[label_index(label)];
    auto hits = index.top_k(query, 1);
    if (hits.empty()) continue;
    auto it = base.by_id.find(hits.front().doc_id);
    if (it == base.by_id.end())
      throw IndexError("index references unknown knowledge piece '" +
                       hits.front().doc_id + "'");
    slot.piece = base.pieces[it->second];
  }
  return result;
}

std::string question_index_text(const ExamQuestion& q) {
  std::string text = q.stem;
  for (char label : kOptionLabels) {
    text += ' ';
    text += q.options[label_index(label)];
  }
  return text;
}

std::vector<ExamQuestion> retrieve_examples(const RetrievalIndex& index,
                                            const QuestionBank& bank,
                                            const ExamQuestion& question,
                                            std::size_t k) {
  if (k == 0) throw IndexError("retrieve_examples requires k >= 1");
  auto hits = index.top_k(question_index_text(question), k, {question.id});
  std::vector<ExamQuestion> out;
  out.reserve(hits.size());
  for (const auto& hit : hits) {
    auto it = bank.by_id.find(hit.doc_id);
    if (it == bank.by_id.end())
      throw IndexError("index references unknown bank entry '" + hit.doc_id + "'");
    out.push_back(bank.entries[it->second]);
  }
  return out;
}

KnowledgeIndexFile build_knowledge_index(KnowledgeBase base, Bm25Params params) {
  std::vector<std::pair<std::string, std::string>> docs;
  docs.reserve(base.pieces.size());
  for (const auto& p : base.pieces) docs.emplace_back(p.id, p.text);
  KnowledgeIndexFile file{RetrievalIndex::build(docs, params), std::move(base)};
  return file;
}

BankIndexFile build_bank_index(QuestionBank bank, Bm25Params params) {
  std::vector<std::pair<std::string, std::string>> docs;
  docs.reserve(bank.entries.size());
  for (const auto& q : bank.entries) docs.emplace_back(q.id, question_index_text(q));
  BankIndexFile file{RetrievalIndex::build(docs, params), std::move(bank)};
  return file;
}

namespace {

constexpr std::string_view kIndexMagic = "KFEIDX1";

json index_to_json(const RetrievalIndex& index) {
  json postings = json::object();
  for (const auto& [term, list] : index.postings()) {
    json entries = json::array();
    for (const auto& [doc, tf] : list) entries.push_back({doc, tf});
    postings[term] = std::move(entries);
  }
  return json{{"params", {{"k1", index.params().k1}, {"b", index.params().b}}},
              {"doc_ids", index.doc_ids()},
              {"doc_lengths", index.doc_lengths()},
              {"postings", std::move(postings)}};
}

RetrievalIndex index_from_json(const json& j) {
  Bm25Params params{j.at("params").at("k1").get<double>(),
                    j.at("params").at("b").get<double>()};
  auto doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
  auto doc_lengths = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
  std::unordered_map<std::string, RetrievalIndex::PostingList> postings;
  for (const auto& [term, entries] : j.at("postings").items()) {
    RetrievalIndex::PostingList list;
    list.reserve(entries.size());
    for (const auto& e : entries)
      list.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>());
    postings.emplace(term, std::move(list));
  }
  return RetrievalIndex::from_parts(std::move(doc_ids), std::move(doc_lengths),
                                    std::move(postings), params);
}

void save_index_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IndexError("cannot write index to '" + path + "'");
  out << kIndexMagic << '\n' << j.dump() << '\n';
}

json load_index_file(const std::string& path, std::string_view expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IndexError("cannot open index '" + path + "'");
  std::string magic;
  std::getline(in, magic);
  if (magic != kIndexMagic)
    throw IndexError("'" + path + "' is not a KFEIDX1 index file");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw IndexError("index '" + path + "' is corrupt");
  if (j.at("kind").get<std::string>() != expected_kind)
    throw IndexError("index '" + path + "' has kind '" +
                     j.at("kind").get<std::string>() + "', expected '" +
                     std::string(expected_kind) + "'");
  return j;
}

}  // namespace

void save_knowledge_index(const KnowledgeIndexFile& file, const std::string& path) {
  json docs = json::array();
  for (const auto& p : file.base.pieces)
    docs.push_back({{"id", p.id}, {"source", p.source}, {"text", p.text}});
  json j{{"kind", "knowledge"},
         {"index", index_to_json(file.index)},
         {"docs", std::move(docs)}};
  save_index_file(j, path);
}

KnowledgeIndexFile load_knowledge_index(const std::string& path) {
  json j = load_index_file(path, "knowledge");
  std::vector<KnowledgePiece> pieces;
  for (const auto& d : j.at("docs")) {
    KnowledgePiece p;
    p.id = d.at("id").get<std::string>();
    p.source = d.at("source").get<std::string>();
    p.text = d.at("text").get<std::string>();
    p.token_estimate = estimate_tokens(p.text);
    pieces.push_back(std::move(p));
  }
  KnowledgeIndexFile file{index_from_json(j.at("index")),
                          make_knowledge_base(std::move(pieces))};
  if (file.index.doc_count() != file.base.pieces.size())
    throw IndexError("index '" + path + "': doc count mismatch");
  return file;
}

void save_bank_index(const BankIndexFile& file, const std::string& path) {
  json docs = json::array();
  for (const auto& q : file.bank.entries) {
    json opts = json::object();
    for (char label : kOptionLabels)
      opts[std::string(1, label)] = q.options[label_index(label)];
    json jq{{"id", q.id}, {"stem", q.stem}, {"options", std::move(opts)}};
    if (q.answer) jq["answer"] = std::string(1, *q.answer);
    if (q.category) jq["category"] = to_string(*q.category);
    docs.push_back(std::move(jq));
  }
  json j{{"kind", "questions"},
         {"index", index_to_json(file.index)},
         {"docs", std::move(docs)}};
  save_index_file(j, path);
}

BankIndexFile load_bank_index(const std::string& path) {
  json j = load_index_file(path, "questions");
  std::vector<ExamQuestion> entries;
  for (const auto& d : j.at("docs")) {
    ExamQuestion q;
    q.id = d.at("id").get<std::string>();
    q.stem = d.at("stem").get<std::string>();
    for (char label : kOptionLabels)
      q.options[label_index(label)] =
          d.at("options").at(std::string(1, label)).get<std::string>();
    if (d.contains("answer")) q.answer = d.at("answer").get<std::string>().at(0);
    if (d.contains("category")) {
      auto cat = category_from_string(d.at("category").get<std::string>());
      if (!cat) throw IndexError("bad category in index '" + path + "'");
      q.category = cat;
    }
    entries.push_back(std::move(q));
  }
  BankIndexFile file{index_from_json(j.at("index")),
                     make_question_bank(std::move(entries))};
  if (file.index.doc_count() != file.bank.entries.size())
    throw IndexError("index '" + path + "': doc count mismatch");
  return file;
}

}  // namespace kfe
