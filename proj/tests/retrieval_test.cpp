#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kfe/retrieval.hpp"
#include "kfe/tokenizer.hpp"
#include "kfe/utf8.hpp"

using namespace kfe;

namespace {

// Brute-force BM25 oracle: scores every document with the stated formula,
// filters positives, sorts by (score desc, id asc). Kept independent of the
// index implementation on purpose.
struct OracleHit {
  std::string id;
  double score;
};

std::vector<OracleHit> oracle_rank(
    const std::vector<std::pair<std::string, std::string>>& docs,
    const std::string& query, const Bm25Params& params,
    const std::unordered_set<std::string>& exclude = {}) {
  const auto query_tokens = tokenize(query);

  std::vector<std::vector<std::string>> doc_tokens;
  doc_tokens.reserve(docs.size());
  double total_len = 0;
  for (const auto& [id, text] : docs) {
    doc_tokens.push_back(tokenize(text));
    total_len += doc_tokens.back().size();
  }
  const double avgdl = total_len / docs.size();
  const double n = static_cast<double>(docs.size());

  auto df_of = [&](const std::string& term) {
    std::size_t df = 0;
    for (const auto& tokens : doc_tokens)
      if (std::find(tokens.begin(), tokens.end(), term) != tokens.end()) ++df;
    return df;
  };

  std::vector<OracleHit> hits;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    double score = 0.0;
    const double dl = static_cast<double>(doc_tokens[d].size());
    for (const auto& term : query_tokens) {
      const double tf = static_cast<double>(
          std::count(doc_tokens[d].begin(), doc_tokens[d].end(), term));
      if (tf == 0.0) continue;
      const double df = static_cast<double>(df_of(term));
      const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      score += idf * tf * (params.k1 + 1.0) /
               (tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl));
    }
    if (score > 0.0 && !exclude.count(docs[d].first))
      hits.push_back({docs[d].first, score});
  }
  std::sort(hits.begin(), hits.end(), [](const OracleHit& a, const OracleHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return hits;
}

std::vector<std::pair<std::string, std::string>> random_corpus(
    std::mt19937_64& rng, std::size_t max_docs) {
  // Small shared vocabulary so queries overlap documents often; mixes CJK
  // words with latin terms.
  static const std::vector<std::string> vocab = {
      "高血压", "糖尿病", "心肌梗死", "肺炎", "贫血", "治疗", "诊断",
      "患者",   "症状",   "首选",     "禁忌", "药物", "ecg",  "ct",
      "mri",    "ph",     "血压",     "血糖", "发热", "咳嗽"};
  const std::size_t n_docs = 1 + rng() % max_docs;
  std::vector<std::pair<std::string, std::string>> docs;
  docs.reserve(n_docs);
  for (std::size_t d = 0; d < n_docs; ++d) {
    std::string text;
    const std::size_t words = 1 + rng() % 40;
    for (std::size_t w = 0; w < words; ++w) {
      text += vocab[rng() % vocab.size()];
      text += ' ';
    }
    char id[16];
    std::snprintf(id, sizeof(id), "d%03zu", d);
    docs.emplace_back(id, text);
  }
  return docs;
}

std::string random_query(std::mt19937_64& rng) {
  static const std::vector<std::string> vocab = {
      "高血压", "糖尿病", "心肌梗死", "肺炎", "治疗", "诊断", "患者",
      "首选",   "药物",   "ecg",      "血压", "发热", "无关词"};
  std::string q;
  const std::size_t words = 1 + rng() % 8;
  for (std::size_t w = 0; w < words; ++w) {
    q += vocab[rng() % vocab.size()];
    q += ' ';
  }
  return q;
}

ExamQuestion make_question(const std::string& id, const std::string& stem,
                           std::array<std::string, 5> options,
                           char answer = 'A') {
  ExamQuestion q;
  q.id = id;
  q.stem = stem;
  q.options = std::move(options);
  q.answer = answer;
  q.category = Category::MK;
  return q;
}

}  // namespace

TEST_CASE("build_index counts terms and lengths") {
  const auto index = RetrievalIndex::build({{"d", "a b a"}});
  CHECK(index.doc_count() == 1);
  CHECK(index.doc_lengths()[0] == 3);
  CHECK(index.avg_doc_length() == doctest::Approx(3.0));
  REQUIRE(index.postings().count("a"));
  REQUIRE(index.postings().count("b"));
  CHECK(index.postings().at("a") ==
        RetrievalIndex::PostingList{{0, 2}});
  CHECK(index.postings().at("b") ==
        RetrievalIndex::PostingList{{0, 1}});
}

TEST_CASE("build_index: two identical docs share the average length") {
  const auto index = RetrievalIndex::build({{"d1", "x y"}, {"d2", "x y"}});
  CHECK(index.doc_lengths()[0] == 2);
  CHECK(index.doc_lengths()[1] == 2);
  CHECK(index.avg_doc_length() == doctest::Approx(2.0));
}

TEST_CASE("build_index: statistics match a brute-force recount") {
  std::mt19937_64 rng(3);
  const auto docs = random_corpus(rng, 100);
  const auto index = RetrievalIndex::build(docs);
  std::size_t total = 0;
  for (const auto& [id, text] : docs) {
    const auto tokens = tokenize(text);
    total += tokens.size();
    // recount term frequencies for this doc
    std::unordered_map<std::string, std::uint32_t> tf;
    for (const auto& t : tokens) ++tf[t];
    const auto idx = static_cast<std::uint32_t>(
        std::lower_bound(index.doc_ids().begin(), index.doc_ids().end(), id) -
        index.doc_ids().begin());
    CHECK(index.doc_lengths()[idx] == tokens.size());
    for (const auto& [term, freq] : tf) {
      const auto& list = index.postings().at(term);
      auto it = std::lower_bound(list.begin(), list.end(),
                                 std::make_pair(idx, std::uint32_t{0}));
      REQUIRE(it != list.end());
      CHECK(it->first == idx);
      CHECK(it->second == freq);
    }
  }
  CHECK(index.avg_doc_length() ==
        doctest::Approx(static_cast<double>(total) / docs.size()));
}

TEST_CASE("build_index rejects empty corpus and duplicate ids") {
  CHECK_THROWS_AS(RetrievalIndex::build({}), IndexError);
  CHECK_THROWS_WITH_AS(RetrievalIndex::build({{"d", "a"}, {"d", "b"}}),
                       doctest::Contains("d"), IndexError);
}

TEST_CASE("score: no shared term gives zero") {
  const auto index = RetrievalIndex::build({{"d", "a b a"}});
  CHECK(index.score(tokenize("zz qq"), "d") == 0.0);
}

TEST_CASE("score: single-doc corpus matches the hand-computed value") {
  // doc "a b a", query "a": idf = ln(1 + (1-1+0.5)/(1+0.5)) = ln(4/3);
  // tf = 2, dl = 3 = avgdl, so denom = 2 + 1.2*(1-0.75+0.75) = 3.2 and
  // score = ln(4/3) * 2*2.2/3.2 = 0.39556284962119867.
  const auto index = RetrievalIndex::build({{"d", "a b a"}});
  CHECK(index.score(tokenize("a"), "d") ==
        doctest::Approx(0.39556284962119867).epsilon(1e-12));
}

TEST_CASE("score: unknown doc id throws") {
  const auto index = RetrievalIndex::build({{"d", "a"}});
  CHECK_THROWS_AS(index.score(tokenize("a"), "nope"), IndexError);
}

TEST_CASE("score agrees with the oracle on random corpora") {
  std::mt19937_64 rng(5);
  for (int iter = 0; iter < 50; ++iter) {
    const auto docs = random_corpus(rng, 100);
    const auto index = RetrievalIndex::build(docs);
    const auto query = random_query(rng);
    const auto oracle = oracle_rank(docs, query, index.params());
    const auto query_tokens = tokenize(query);
    for (const auto& hit : oracle) {
      const double got = index.score(query_tokens, hit.id);
      CHECK(std::abs(got - hit.score) <= 1e-9 * std::max(1.0, std::abs(hit.score)));
    }
  }
}

TEST_CASE("top_k: only one matching doc") {
  const auto index = RetrievalIndex::build(
      {{"d1", "alpha beta"}, {"d2", "gamma delta"}, {"d3", "epsilon zeta"}});
  const auto hits = index.top_k("alpha", 3);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].doc_id == "d1");
  CHECK(hits[0].rank == 1);
}

TEST_CASE("top_k matches the oracle ranking") {
  std::mt19937_64 rng(9);
  for (int iter = 0; iter < 100; ++iter) {
    const auto docs = random_corpus(rng, 100);
    const auto index = RetrievalIndex::build(docs);
    const auto query = random_query(rng);
    const std::size_t k = 1 + rng() % 10;
    const auto hits = index.top_k(query, k);
    const auto oracle = oracle_rank(docs, query, index.params());
    REQUIRE(hits.size() == std::min(k, oracle.size()));
    for (std::size_t i = 0; i < hits.size(); ++i) {
      CHECK(hits[i].doc_id == oracle[i].id);
      CHECK(hits[i].rank == i + 1);
      CHECK(std::abs(hits[i].score - oracle[i].score) <=
            1e-9 * std::max(1.0, std::abs(oracle[i].score)));
    }
  }
}

TEST_CASE("top_k: excluded top hit reproduces oracle-minus-exclusion") {
  std::mt19937_64 rng(13);
  for (int iter = 0; iter < 30; ++iter) {
    const auto docs = random_corpus(rng, 60);
    const auto index = RetrievalIndex::build(docs);
    const auto query = random_query(rng);
    const auto full = oracle_rank(docs, query, index.params());
    if (full.empty()) continue;
    const std::unordered_set<std::string> exclude{full.front().id};
    const auto expected = oracle_rank(docs, query, index.params(), exclude);
    const auto hits = index.top_k(query, docs.size(), exclude);
    REQUIRE(hits.size() == expected.size());
    for (std::size_t i = 0; i < hits.size(); ++i)
      CHECK(hits[i].doc_id == expected[i].id);
  }
}

TEST_CASE("top_k: query identical to a stored doc ranks it first") {
  std::mt19937_64 rng(17);
  for (int iter = 0; iter < 20; ++iter) {
    auto docs = random_corpus(rng, 30);
    // make one doc clearly unique so self-retrieval is unambiguous
    docs[0].second = "罕见病甲状旁腺功能减退症 hypoparathyroidism 的特异文本";
    const auto index = RetrievalIndex::build(docs);
    const auto hits = index.top_k(docs[0].second, 3);
    REQUIRE(!hits.empty());
    CHECK(hits[0].doc_id == docs[0].first);
  }
}

TEST_CASE("top_k is deterministic") {
  std::mt19937_64 rng(19);
  const auto docs = random_corpus(rng, 80);
  const auto index = RetrievalIndex::build(docs);
  const auto index2 = RetrievalIndex::build(docs);
  const auto query = random_query(rng);
  const auto a = index.top_k(query, 10);
  const auto b = index2.top_k(query, 10);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].doc_id == b[i].doc_id);
    CHECK(a[i].score == b[i].score);  // bit-identical
  }
}

TEST_CASE("adding an unrelated doc keeps relative order of existing hits") {
  std::mt19937_64 rng(23);
  for (int iter = 0; iter < 50; ++iter) {
    auto docs = random_corpus(rng, 50);
    const auto query = random_query(rng);
    const auto index = RetrievalIndex::build(docs);
    const auto before = index.top_k(query, docs.size());
    // no shared terms with the query vocabulary by construction
    docs.emplace_back("zzz-unrelated", "完全不相干的文字 totallyunrelatedterm");
    const auto index2 = RetrievalIndex::build(docs);
    const auto after = index2.top_k(query, docs.size());
    // the impl stays oracle-consistent on the grown corpus
    const auto oracle = oracle_rank(docs, query, index2.params());
    REQUIRE(after.size() == oracle.size());
    for (std::size_t i = 0; i < after.size(); ++i)
      CHECK(after[i].doc_id == oracle[i].id);
    // and the surviving hits keep their relative order
    std::vector<std::string> before_ids, after_ids;
    for (const auto& h : before) before_ids.push_back(h.doc_id);
    for (const auto& h : after)
      if (h.doc_id != "zzz-unrelated") after_ids.push_back(h.doc_id);
    CHECK(before_ids == after_ids);
  }
}

TEST_CASE("retrieve_knowledge fills five slots in option order") {
  std::vector<KnowledgePiece> pieces = {
      {"k1", "bk#1", "高血压患者首选药物治疗", 0},
      {"k2", "bk#2", "糖尿病的胰岛素治疗", 0},
      {"k3", "bk#3", "肺炎的抗生素选择", 0},
  };
  for (auto& p : pieces) p.token_estimate = estimate_tokens(p.text);
  auto kb = make_knowledge_base(pieces);
  auto file = build_knowledge_index(std::move(kb));

  const auto q = make_question(
      "q1", "老年患者血压升高",
      {"药物治疗", "胰岛素", "抗生素", "手术", "观察随访"});
  const auto slots = retrieve_knowledge(file.index, file.base, q);
  REQUIRE(slots.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(slots[i].label == 'A' + i);
  REQUIRE(slots[0].piece.has_value());
  CHECK(slots[0].piece->id == "k1");  // 药物治疗 overlaps k1 most
}

TEST_CASE("retrieve_knowledge: no overlap gives five empty slots") {
  std::vector<KnowledgePiece> pieces = {{"k1", "bk#1", "完全无关的文本", 0}};
  pieces[0].token_estimate = estimate_tokens(pieces[0].text);
  auto file = build_knowledge_index(make_knowledge_base(pieces));
  const auto q = make_question("q1", "zz", {"qq", "ww", "ee", "rr", "tt"});
  const auto slots = retrieve_knowledge(file.index, file.base, q);
  for (const auto& s : slots) CHECK(!s.piece.has_value());
}

TEST_CASE("retrieve_knowledge matches the brute-force top-1 oracle") {
  std::mt19937_64 rng(29);
  std::vector<KnowledgePiece> pieces;
  const auto docs = random_corpus(rng, 40);
  for (const auto& [id, text] : docs)
    pieces.push_back({id, "bk#" + id, text, estimate_tokens(text)});
  auto file = build_knowledge_index(make_knowledge_base(pieces));

  const auto q = make_question("q1", "高血压患者的治疗",
                               {"药物", "诊断", "症状", "首选", "发热"});
  const auto slots = retrieve_knowledge(file.index, file.base, q);
  for (char label : kOptionLabels) {
    const std::string query = q.stem + " " + q.options[label_index(label)];
    const auto oracle = oracle_rank(docs, query, file.index.params());
    const auto& slot = slots[label_index(label)];
    if (oracle.empty()) {
      CHECK(!slot.piece.has_value());
    } else {
      REQUIRE(slot.piece.has_value());
      CHECK(slot.piece->id == oracle.front().id);
    }
  }
}

TEST_CASE("retrieve_examples excludes the query question") {
  std::vector<ExamQuestion> entries;
  for (int i = 0; i < 5; ++i) {
    entries.push_back(make_question("q" + std::to_string(i), "高血压的治疗选择",
                                    {"药物", "手术", "观察", "透析", "放疗"},
                                    'A'));
  }
  auto file = build_bank_index(make_question_bank(entries));
  const auto hits = retrieve_examples(file.index, file.bank, entries[0], 9);
  CHECK(hits.size() <= 4);  // 5-entry bank minus the query itself
  for (const auto& h : hits) CHECK(h.id != "q0");
}

TEST_CASE("retrieve_examples matches the oracle on a 50-question bank") {
  std::mt19937_64 rng(31);
  std::vector<ExamQuestion> entries;
  std::vector<std::pair<std::string, std::string>> docs;
  for (int i = 0; i < 50; ++i) {
    const auto corpus_entry = random_corpus(rng, 1)[0];
    ExamQuestion q = make_question(
        "q" + std::to_string(i), corpus_entry.second,
        {"高血压", "糖尿病", "治疗", "诊断", "药物"},
        static_cast<char>('A' + i % 5));
    entries.push_back(q);
    docs.emplace_back(q.id, question_index_text(q));
  }
  auto file = build_bank_index(make_question_bank(entries));
  const auto& query_q = entries[7];
  const auto hits = retrieve_examples(file.index, file.bank, query_q, 3);
  const auto oracle =
      oracle_rank(docs, question_index_text(query_q), file.index.params(), {query_q.id});
  REQUIRE(hits.size() == std::min<std::size_t>(3, oracle.size()));
  for (std::size_t i = 0; i < hits.size(); ++i) {
    CHECK(hits[i].id == oracle[i].id);
    CHECK(hits[i].answer.has_value());  // gold answers preserved
  }
}

TEST_CASE("index files round-trip through disk") {
  std::mt19937_64 rng(37);
  const auto docs = random_corpus(rng, 30);
  std::vector<KnowledgePiece> pieces;
  for (const auto& [id, text] : docs)
    pieces.push_back({id, "bk#" + id, text, estimate_tokens(text)});
  auto file = build_knowledge_index(make_knowledge_base(pieces));

  const auto path =
      (std::filesystem::temp_directory_path() / "kfe_test_knowledge.idx").string();
  save_knowledge_index(file, path);
  const auto loaded = load_knowledge_index(path);
  CHECK(loaded.index.doc_count() == file.index.doc_count());
  CHECK(loaded.index.avg_doc_length() ==
        doctest::Approx(file.index.avg_doc_length()));
  CHECK(loaded.base.pieces.size() == file.base.pieces.size());

  const std::string query = "高血压 治疗";
  const auto a = file.index.top_k(query, 5);
  const auto b = loaded.index.top_k(query, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].doc_id == b[i].doc_id);
    CHECK(a[i].score == b[i].score);
  }
}

TEST_CASE("loading a non-index file fails with the magic check") {
  const auto path =
      (std::filesystem::temp_directory_path() / "kfe_not_an_index.txt").string();
  {
    std::ofstream out(path);
    out << "not an index\n";
  }
  CHECK_THROWS_WITH_AS(load_knowledge_index(path), doctest::Contains("KFEIDX1"),
                       IndexError);
}
