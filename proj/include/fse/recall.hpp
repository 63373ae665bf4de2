#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fse/corpus.hpp"
#include "fse/pairclf.hpp"
#include "fse/textnorm.hpp"

namespace fse {

enum class Source { exact, embed, both };
const char* source_name(Source s);

struct Candidate {
  std::size_t index = 0;  // corpus position
  std::string id;
  double score = 0.0;
  Source source = Source::exact;
  bool operator==(const Candidate&) const = default;
};
using CandidateList = std::vector<Candidate>;

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
  double concept_bonus = 0.5;
};

// BM25 over the normalised stem + options field with an additive bonus per
// knowledge concept shared with the query. Only documents matching at least
// one query token are scored.
class LexicalIndex {
 public:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
    bool operator==(const Posting&) const = default;
  };

  LexicalIndex() = default;
  static LexicalIndex build(const Corpus& corpus, const StopWords& stop_words = {}, Bm25Params params = {});

  // Normalised field tokens of an arbitrary exercise.
  std::vector<std::string> field_tokens(const Exercise& e) const;

  CandidateList search(const Exercise& query, std::size_t k) const;

  // idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
  double idf(const std::string& token) const;
  const std::vector<Posting>* postings(const std::string& token) const;
  std::size_t doc_count() const { return doc_len_.size(); }
  double avg_len() const { return avg_len_; }
  std::uint32_t doc_len(std::size_t doc) const { return doc_len_[doc]; }
  const Bm25Params& params() const { return params_; }

  std::string serialize() const;
  static LexicalIndex deserialize(std::string_view bytes);
  bool operator==(const LexicalIndex& o) const;

 private:
  Bm25Params params_;
  StopWords stop_words_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<std::uint32_t> doc_len_;
  std::vector<std::vector<int>> concepts_;
  std::vector<std::string> ids_;
  double avg_len_ = 0.0;
};

// Exact cosine scan over unit-norm rows.
class VectorIndex {
 public:
  VectorIndex() = default;
  VectorIndex(std::vector<std::string> ids, Mat rows);

  // Top-k by cosine, ties by corpus position; exclude_id is skipped.
  CandidateList search(const Vec& query, std::size_t k, const std::string& exclude_id = {}) const;

  std::size_t size() const { return ids_.size(); }
  int dim() const { return static_cast<int>(rows_.cols()); }
  const Mat& rows() const { return rows_; }
  const std::vector<std::string>& ids() const { return ids_; }

  TensorArchive to_archive() const;
  static VectorIndex from_archive(const TensorArchive& a);

 private:
  std::vector<std::string> ids_;
  Mat rows_;
};

// Intersection first (embed order), then ceil((n - n_u) / 2) from the exact
// channel and floor((n - n_u) / 2) from the embed channel, backfilling from
// the other channel when one runs out. The two channel tails alternate,
// exact first.
CandidateList merge_candidates(const CandidateList& exact, const CandidateList& embed, std::size_t n);

struct RecallConfig {
  std::size_t k_exact = 200;
  std::size_t k_embed = 200;
  std::size_t n = 100;
  double dedup_threshold = 0.5;
};

struct RecallContext {
  const Corpus* corpus = nullptr;
  const LexicalIndex* lexical = nullptr;
  const VectorIndex* vectors = nullptr;
  const PairFeaturizer* featurizer = nullptr;
  const PairClassifier* dedup = nullptr;  // null disables duplicate removal
};

// Lexical + vector search, merge, then drop candidates the dedup classifier
// flags as duplicates of the query.
CandidateList recall(const Exercise& query, const Vec& query_embedding, const RecallContext& ctx,
                     const RecallConfig& config);

}  // namespace fse
