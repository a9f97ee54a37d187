#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kfe/corpus.hpp"
#include "kfe/tokenizer.hpp"

namespace kfe {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct ScoredHit {
  std::string doc_id;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Okapi BM25 over an in-memory inverted index. Documents are stored in
// ascending id order, so posting lists are sorted by doc id and score ties
// break toward the lexicographically smaller id. Immutable once built; safe
// for concurrent queries.
class RetrievalIndex {
 public:
  static RetrievalIndex build(const std::vector<std::pair<std::string, std::string>>& docs,
                              Bm25Params params = {});

  // Sum over query token occurrences of
  //   idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl))
  // with idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)).
  double score(const std::vector<Token>& query_tokens, const std::string& doc_id) const;

  // Positive-score hits only, ordered by (score desc, doc_id asc), at most k.
  std::vector<ScoredHit> top_k(std::string_view query_text, std::size_t k,
                               const std::unordered_set<std::string>& exclude = {}) const;

  std::size_t doc_count() const { return doc_ids_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  const Bm25Params& params() const { return params_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }

  using PostingList = std::vector<std::pair<std::uint32_t, std::uint32_t>>;  // (doc idx, tf)
  const std::unordered_map<std::string, PostingList>& postings() const { return postings_; }

  // Reassembles a previously built index from its serialized parts.
  static RetrievalIndex from_parts(std::vector<std::string> doc_ids,
                                   std::vector<std::uint32_t> doc_lengths,
                                   std::unordered_map<std::string, PostingList> postings,
                                   Bm25Params params);

 private:
  RetrievalIndex() = default;
  double score_by_index(const std::vector<Token>& query_tokens, std::uint32_t doc) const;

  std::vector<std::string> doc_ids_;  // ascending
  std::unordered_map<std::string, std::uint32_t> id_to_idx_;
  std::vector<std::uint32_t> doc_lengths_;
  double avg_doc_length_ = 0.0;
  std::unordered_map<std::string, PostingList> postings_;
  Bm25Params params_;
};

struct KnowledgeHit {
  char label = 'A';
  std::optional<KnowledgePiece> piece;
};

// One hit per option, query = stem + " " + option text, top-1 each. Slots
// with no lexical overlap stay empty. Always returns five slots, A..E.
std::array<KnowledgeHit, 5> retrieve_knowledge(const RetrievalIndex& index,
                                               const KnowledgeBase& base,
                                               const ExamQuestion& question);

// Query = stem + all five option texts in label order; the question itself is
// excluded so evaluation never leaks the query into its own demonstrations.
std::vector<ExamQuestion> retrieve_examples(const RetrievalIndex& index,
                                            const QuestionBank& bank,
                                            const ExamQuestion& question,
                                            std::size_t k);

// Self-contained index files (magic header KFEIDX1 + JSON payload). The
// indexed records travel with the index so a run needs only these files.
struct KnowledgeIndexFile {
  RetrievalIndex index;
  KnowledgeBase base;
};

struct BankIndexFile {
  RetrievalIndex index;
  QuestionBank bank;
};

KnowledgeIndexFile build_knowledge_index(KnowledgeBase base, Bm25Params params = {});
BankIndexFile build_bank_index(QuestionBank bank, Bm25Params params = {});

// Text used to index one bank entry: stem plus all option texts.
std::string question_index_text(const ExamQuestion& q);

void save_knowledge_index(const KnowledgeIndexFile& file, const std::string& path);
KnowledgeIndexFile load_knowledge_index(const std::string& path);
void save_bank_index(const BankIndexFile& file, const std::string& path);
BankIndexFile load_bank_index(const std::string& path);

}  // namespace kfe
