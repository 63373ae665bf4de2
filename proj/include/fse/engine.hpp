#pragma once

#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "fse/config.hpp"
#include "fse/metrics.hpp"
#include "fse/ranking.hpp"
#include "fse/recall.hpp"
#include "fse/rerank.hpp"

namespace fse {

// Snapshot files of a workspace directory.
struct Workspace {
  std::string dir;

  explicit Workspace(std::string d) : dir(std::move(d)) {}
  std::string path(const std::string& name) const { return dir + "/" + name; }
  bool has(const std::string& name) const;

  static constexpr const char* corpus = "corpus.snap";
  static constexpr const char* pairs = "pairs.jsonl";
  static constexpr const char* truth = "truth.json";
  static constexpr const char* vocab = "vocab.txt";
  static constexpr const char* esrm_pretrained = "esrm_pretrain.bin";
  static constexpr const char* esrm = "esrm.bin";
  static constexpr const char* lexical = "lexical.idx";
  static constexpr const char* vectors = "vectors.bin";
  static constexpr const char* dedup = "dedup.bin";
  static constexpr const char* variant = "variant.bin";
  static constexpr const char* index_manifest = "index.json";
  static constexpr const char* ranker = "ranker.bin";
  static constexpr const char* cleaned_pairs = "pairs.clean.jsonl";
  static constexpr const char* clean_report = "clean_report.json";
  static constexpr const char* eval_report = "eval.json";
};

// Throws ConfigError naming every missing file.
void require_files(const Workspace& ws, const std::vector<std::string>& names);

struct EngineConfig {
  StopWords stop_words;
  RecallConfig recall;
  RerankConfig rerank;
  int threads = 1;
};
EngineConfig engine_config(const Config& config);

// A query: a corpus id or a full exercise, with an optional student profile.
struct QueryRequest {
  std::variant<std::string, Exercise> target;
  std::optional<StudentProfile> profile;
};

struct QueryOutcome {
  std::optional<RerankedResult> result;
  std::exception_ptr error;
};

// Loaded snapshots and the recall -> rank -> rerank composition. Immutable
// after open() apart from set_ranker(), so concurrent queries are safe.
class Engine {
 public:
  // Loads every snapshot the pipeline needs. Missing files raise ConfigError
  // listing them; an index built from other corpus/model snapshots raises
  // VersionError.
  static Engine open(const Workspace& ws, const Config& config, bool require_ranker = true);

  Engine(Engine&&) noexcept;
  Engine& operator=(Engine&&) noexcept;
  ~Engine();

  const Corpus& corpus() const;
  const Vocab& vocab() const;
  const EsrmParams& esrm() const;
  const LexicalIndex& lexical() const;
  const VectorIndex& vectors() const;
  const RankTexts& texts() const;
  const RankerParams& ranker() const;
  const EngineConfig& config() const;

  const Exercise& exercise(const std::string& id) const;  // NotFoundError
  TokenSequence stem_tokens(const Exercise& e) const;
  Vec embed(const Exercise& e) const;  // ValidationError on an empty stem

  CandidateList recall(const Exercise& query) const;
  CandidateList recall(const Exercise& query, const Vec& embedding) const;
  // Ranks with the loaded ranker unless another one is given.
  CandidateList rank(const Exercise& query, const CandidateList& recalled, const RankerParams* ranker = nullptr) const;
  RerankedResult query(const Exercise& query, const std::optional<StudentProfile>& profile = std::nullopt) const;
  RerankedResult query(const std::string& id, const std::optional<StudentProfile>& profile = std::nullopt) const;

  // Embeds the whole batch first, then runs the remaining stages per query
  // (in parallel with config().threads). Each outcome equals query() on its
  // own request.
  std::vector<QueryOutcome> query_batch(const std::vector<QueryRequest>& requests) const;

  double duplicate_probability(const Exercise& a, const Exercise& b) const;

  // Snapshot name -> version (hex FNV-1a of the snapshot bytes).
  const std::map<std::string, std::string>& versions() const;
  // All versions joined into one string, used in cache keys.
  std::string version_key() const;

  void set_ranker(RankerParams ranker);

 private:
  struct State;
  explicit Engine(std::unique_ptr<State> s);
  const Exercise& resolve(const QueryRequest& r) const;
  std::unique_ptr<State> s_;
};

// Evaluation queries with their relevant ids.
struct EvalSet {
  std::vector<std::size_t> queries;  // corpus positions
  std::vector<std::unordered_set<std::string>> relevant;
};

// Queries are exercises that seed no training pair. With ground-truth groups
// the relevant ids are the query's group mates; otherwise the exercises
// paired with it under a similar label anywhere in all_pairs, and queries
// without any are dropped.
EvalSet make_eval_set(const Corpus& corpus, const std::vector<LabeledPair>& all_pairs,
                      const std::vector<LabeledPair>& train_pairs, const std::vector<int>* groups = nullptr);

// Runs recall once per query, then scores any number of rankers against it.
class Evaluator {
 public:
  Evaluator(const Engine& engine, EvalSet set, int threads = 1);

  const EvalSet& set() const { return set_; }
  const std::vector<CandidateList>& recalled() const { return recalled_; }

  RecallAtK recall_at_k(std::size_t k) const;
  PrecisionAtK recall_order_precision() const;
  PrecisionAtK precision(const RankerParams& ranker) const;
  EvalReport report(const RankerParams& ranker, std::size_t recall_k, const std::string& config_hash) const;

  std::vector<JudgedList> judged(const std::vector<CandidateList>& lists) const;

 private:
  const Engine* engine_;
  EvalSet set_;
  int threads_;
  std::vector<CandidateList> recalled_;
};

// Runs fn(i) for i in [0, n) on up to `threads` threads; rethrows the first
// failure after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace fse
