#include "fse/engine.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <mutex>
#include <thread>

namespace fse {

bool Workspace::has(const std::string& name) const { return std::filesystem::exists(path(name)); }

void require_files(const Workspace& ws, const std::vector<std::string>& names) {
  std::string missing;
  for (const auto& n : names)
    if (!ws.has(n)) missing += (missing.empty() ? "" : ", ") + n;
  if (!missing.empty()) throw ConfigError("missing snapshots in " + ws.dir + ": " + missing);
}

EngineConfig engine_config(const Config& c) {
  EngineConfig e;
  for (auto& w : c.get_list("text.stop_words")) e.stop_words.insert(std::move(w));
  e.recall.k_exact = c.get_u64("recall.k_exact");
  e.recall.k_embed = c.get_u64("recall.k_embed");
  e.recall.n = c.get_u64("recall.n");
  e.recall.dedup_threshold = c.get_double("recall.dedup_threshold");
  e.rerank.variant_threshold = c.get_double("rerank.variant_threshold");
  e.rerank.enable_variant = c.get_bool("rerank.enable_variant");
  e.threads = std::max(1, c.get_int("threads"));
  return e;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(m);
            if (!failure) failure = std::current_exception();
          }
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
}

struct Engine::State {
  EngineConfig config;
  Corpus corpus;
  Vocab vocab;
  EsrmParams esrm;
  LexicalIndex lexical;
  VectorIndex vectors;
  PairClassifier dedup;
  std::optional<PairClassifier> variant;
  RankerParams ranker;
  RankTexts texts;
  std::map<std::string, std::string> versions;
  std::unique_ptr<PairFeaturizer> featurizer;  // points into vocab and esrm
};

Engine::Engine(std::unique_ptr<State> s) : s_(std::move(s)) {}
Engine::Engine(Engine&&) noexcept = default;
Engine& Engine::operator=(Engine&&) noexcept = default;
Engine::~Engine() = default;

Engine Engine::open(const Workspace& ws, const Config& config, bool require_ranker) {
  auto s = std::make_unique<State>();
  s->config = engine_config(config);
  std::vector<std::string> needed{Workspace::corpus, Workspace::vocab,   Workspace::esrm,          Workspace::lexical,
                                  Workspace::vectors, Workspace::dedup, Workspace::index_manifest};
  if (require_ranker) needed.emplace_back(Workspace::ranker);
  if (s->config.rerank.enable_variant) needed.emplace_back(Workspace::variant);
  require_files(ws, needed);

  auto load = [&](const char* name) {
    auto bytes = read_file(ws.path(name));
    s->versions[name] = snapshot_version(bytes);
    return bytes;
  };
  s->corpus = deserialize_snapshot(load(Workspace::corpus));
  s->vocab = Vocab::deserialize(load(Workspace::vocab));
  s->esrm = EsrmParams::from_archive(TensorArchive::deserialize(load(Workspace::esrm), "esrm"));

  const auto manifest = nlohmann::json::parse(read_file(ws.path(Workspace::index_manifest)));
  for (const char* name : {Workspace::corpus, Workspace::vocab, Workspace::esrm})
    if (manifest.value(name, std::string()) != s->versions[name])
      throw VersionError(std::string("index was built from a different ") + name + "; rerun index");

  s->lexical = LexicalIndex::deserialize(load(Workspace::lexical));
  s->vectors = VectorIndex::from_archive(TensorArchive::deserialize(load(Workspace::vectors), "vindex"));
  s->dedup = PairClassifier::from_archive(TensorArchive::deserialize(load(Workspace::dedup), "pairclf"));
  if (s->config.rerank.enable_variant)
    s->variant = PairClassifier::from_archive(TensorArchive::deserialize(load(Workspace::variant), "pairclf"));
  if (require_ranker)
    s->ranker = RankerParams::from_archive(TensorArchive::deserialize(load(Workspace::ranker), "ranker"));

  if (s->vectors.size() != s->corpus.size() || s->lexical.doc_count() != s->corpus.size())
    throw VersionError("index size does not match the corpus");
  if (s->vectors.dim() != s->esrm.dim()) throw VersionError("vector index dimension does not match the model");
  if (s->esrm.encoder.vocab_size() != s->vocab.size()) throw VersionError("model vocabulary does not match vocab.txt");

  s->texts = prepare_rank_texts(s->corpus, s->vocab, s->config.stop_words);
  s->featurizer = std::make_unique<PairFeaturizer>(s->vocab, s->esrm, s->config.stop_words);
  return Engine(std::move(s));
}

const Corpus& Engine::corpus() const { return s_->corpus; }
const Vocab& Engine::vocab() const { return s_->vocab; }
const EsrmParams& Engine::esrm() const { return s_->esrm; }
const LexicalIndex& Engine::lexical() const { return s_->lexical; }
const VectorIndex& Engine::vectors() const { return s_->vectors; }
const RankTexts& Engine::texts() const { return s_->texts; }
const RankerParams& Engine::ranker() const { return s_->ranker; }
const EngineConfig& Engine::config() const { return s_->config; }
const std::map<std::string, std::string>& Engine::versions() const { return s_->versions; }

std::string Engine::version_key() const {
  std::string k;
  for (const auto& [name, v] : s_->versions) k += name + "=" + v + ";";
  return k;
}

void Engine::set_ranker(RankerParams ranker) {
  s_->versions[Workspace::ranker] = snapshot_version(ranker.to_archive().serialize());
  s_->ranker = std::move(ranker);
}

const Exercise& Engine::exercise(const std::string& id) const {
  const auto i = s_->corpus.find(id);
  if (!i) throw NotFoundError("exercise '" + id + "' not found");
  return s_->corpus[*i];
}

TokenSequence Engine::stem_tokens(const Exercise& e) const {
  return tokenize(stem_side(e), s_->vocab, s_->config.stop_words);
}

Vec Engine::embed(const Exercise& e) const { return embed_text(stem_tokens(e), s_->esrm); }

CandidateList Engine::recall(const Exercise& query) const { return recall(query, embed(query)); }

CandidateList Engine::recall(const Exercise& query, const Vec& embedding) const {
  const RecallContext ctx{&s_->corpus, &s_->lexical, &s_->vectors, s_->featurizer.get(), &s_->dedup};
  return fse::recall(query, embedding, ctx, s_->config.recall);
}

CandidateList Engine::rank(const Exercise& query, const CandidateList& recalled, const RankerParams* ranker) const {
  const auto& params = ranker ? *ranker : s_->ranker;
  if (!params.trained()) throw ConfigError("no trained ranker loaded; run train-rank first");
  return fse::rank(stem_tokens(query).ids, recalled, s_->texts, params);
}

RerankedResult Engine::query(const Exercise& q, const std::optional<StudentProfile>& profile) const {
  auto out = query_batch({QueryRequest{q, profile}});
  if (out[0].error) std::rethrow_exception(out[0].error);
  return std::move(*out[0].result);
}

RerankedResult Engine::query(const std::string& id, const std::optional<StudentProfile>& profile) const {
  return query(exercise(id), profile);
}

const Exercise& Engine::resolve(const QueryRequest& r) const {
  if (const auto* id = std::get_if<std::string>(&r.target)) return exercise(*id);
  const auto& e = std::get<Exercise>(r.target);
  validate_exercise(e, s_->corpus.schema());
  return e;
}

std::vector<QueryOutcome> Engine::query_batch(const std::vector<QueryRequest>& requests) const {
  std::vector<QueryOutcome> out(requests.size());
  std::vector<const Exercise*> targets(requests.size(), nullptr);
  std::vector<Vec> embeddings(requests.size());
  // embedding stage for the whole batch, then the per-query stages
  parallel_for(requests.size(), s_->config.threads, [&](std::size_t i) {
    try {
      targets[i] = &resolve(requests[i]);
      embeddings[i] = embed(*targets[i]);
    } catch (...) {
      out[i].error = std::current_exception();
    }
  });
  const VariantModel variant{s_->featurizer.get(), s_->variant ? &*s_->variant : nullptr};
  parallel_for(requests.size(), s_->config.threads, [&](std::size_t i) {
    if (out[i].error) return;
    try {
      const auto& q = *targets[i];
      const auto ranked = rank(q, recall(q, embeddings[i]));
      out[i].result = rerank(q, ranked, s_->corpus, requests[i].profile, s_->config.rerank, variant);
    } catch (...) {
      out[i].error = std::current_exception();
    }
  });
  return out;
}

double Engine::duplicate_probability(const Exercise& a, const Exercise& b) const {
  return s_->dedup.probability(*s_->featurizer, a, b);
}

// ---------------------------------------------------------------------------
// Evaluation

EvalSet make_eval_set(const Corpus& corpus, const std::vector<LabeledPair>& all_pairs,
                      const std::vector<LabeledPair>& train_pairs, const std::vector<int>* groups) {
  std::unordered_set<std::string> train_seeds;
  for (const auto& p : train_pairs) train_seeds.insert(p.a_id);
  std::unordered_map<std::string, std::unordered_set<std::string>> labeled;
  if (!groups) {
    for (const auto& p : all_pairs)
      if (p.label == PairLabel::similar) {
        labeled[p.a_id].insert(p.b_id);
        labeled[p.b_id].insert(p.a_id);
      }
  } else if (groups->size() != corpus.size()) {
    throw ValidationError("ground-truth groups do not match the corpus");
  }
  EvalSet set;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& id = corpus[i].id;
    if (train_seeds.count(id)) continue;
    std::unordered_set<std::string> rel;
    if (groups) {
      for (std::size_t j = 0; j < corpus.size(); ++j)
        if (j != i && (*groups)[j] == (*groups)[i]) rel.insert(corpus[j].id);
    } else if (const auto it = labeled.find(id); it != labeled.end()) {
      rel = it->second;
    }
    if (rel.empty()) continue;
    set.queries.push_back(i);
    set.relevant.push_back(std::move(rel));
  }
  return set;
}

Evaluator::Evaluator(const Engine& engine, EvalSet set, int threads)
    : engine_(&engine), set_(std::move(set)), threads_(threads), recalled_(set_.queries.size()) {
  if (set_.queries.empty()) throw ValidationError("evaluation needs at least one query with relevant exercises");
  parallel_for(set_.queries.size(), threads_,
               [&](std::size_t i) { recalled_[i] = engine_->recall(engine_->corpus()[set_.queries[i]]); });
}

std::vector<JudgedList> Evaluator::judged(const std::vector<CandidateList>& lists) const {
  std::vector<JudgedList> out;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    JudgedList l{engine_->corpus()[set_.queries[i]].id, {}, set_.relevant[i]};
    for (const auto& c : lists[i]) l.retrieved.push_back(c.id);
    out.push_back(std::move(l));
  }
  return out;
}

RecallAtK Evaluator::recall_at_k(std::size_t k) const { return fse::recall_at_k(judged(recalled_), k); }

PrecisionAtK Evaluator::recall_order_precision() const { return precision_at_k(judged(recalled_)); }

PrecisionAtK Evaluator::precision(const RankerParams& ranker) const {
  std::vector<CandidateList> ranked(recalled_.size());
  parallel_for(recalled_.size(), threads_, [&](std::size_t i) {
    ranked[i] = engine_->rank(engine_->corpus()[set_.queries[i]], recalled_[i], &ranker);
  });
  return precision_at_k(judged(ranked));
}

EvalReport Evaluator::report(const RankerParams& ranker, std::size_t recall_k, const std::string& config_hash) const {
  EvalReport r;
  r.config_hash = config_hash;
  r.versions = engine_->versions();
  r.recall = recall_at_k(recall_k);
  r.ranked = precision(ranker);
  r.recall_order = recall_order_precision();
  return r;
}

}  // namespace fse
