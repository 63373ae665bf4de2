#include "fse/recall.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "fse/snapshot.hpp"

namespace fse {

const char* source_name(Source s) {
  switch (s) {
    case Source::exact: return "exact";
    case Source::embed: return "embed";
    case Source::both: return "both";
  }
  return "?";
}

namespace {

void sort_and_truncate(CandidateList& c, std::size_t k) {
  std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
  });
  if (c.size() > k) c.resize(k);
}

constexpr char kLexMagic[] = "FSELEXIX";
constexpr std::uint32_t kLexVersion = 1;

}  // namespace

LexicalIndex LexicalIndex::build(const Corpus& corpus, const StopWords& stop_words, Bm25Params params) {
  LexicalIndex ix;
  ix.params_ = params;
  ix.stop_words_ = stop_words;
  double total = 0.0;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto tokens = ix.field_tokens(corpus[d]);
    std::map<std::string, std::uint32_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [t, n] : tf) ix.postings_[t].push_back({static_cast<std::uint32_t>(d), n});
    ix.doc_len_.push_back(static_cast<std::uint32_t>(tokens.size()));
    ix.concepts_.push_back(corpus[d].metadata.knowledge_concepts);
    ix.ids_.push_back(corpus[d].id);
    total += static_cast<double>(tokens.size());
  }
  ix.avg_len_ = corpus.empty() ? 0.0 : total / static_cast<double>(corpus.size());
  return ix;
}

std::vector<std::string> LexicalIndex::field_tokens(const Exercise& e) const {
  return split_tokens(normalize_text(stem_side(e), stop_words_));
}

double LexicalIndex::idf(const std::string& token) const {
  const auto* p = postings(token);
  const double df = p ? static_cast<double>(p->size()) : 0.0;
  const double n = static_cast<double>(doc_count());
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

const std::vector<LexicalIndex::Posting>* LexicalIndex::postings(const std::string& token) const {
  auto it = postings_.find(token);
  return it == postings_.end() ? nullptr : &it->second;
}

CandidateList LexicalIndex::search(const Exercise& query, std::size_t k) const {
  const auto tokens = field_tokens(query);
  const std::set<std::string> terms(tokens.begin(), tokens.end());  // sorted, unique
  std::vector<double> acc(doc_count(), 0.0);
  std::vector<char> matched(doc_count(), 0);
  const double k1 = params_.k1, b = params_.b;
  for (const auto& t : terms) {
    const auto* plist = postings(t);
    if (!plist) continue;
    const double w = idf(t);
    for (const auto& p : *plist) {
      const double tf = p.tf;
      const double norm = k1 * (1.0 - b + b * static_cast<double>(doc_len_[p.doc]) / avg_len_);
      acc[p.doc] += w * (tf * (k1 + 1.0)) / (tf + norm);
      matched[p.doc] = 1;
    }
  }
  CandidateList out;
  for (std::size_t d = 0; d < doc_count(); ++d) {
    if (!matched[d] || ids_[d] == query.id) continue;
    int shared = 0;
    for (int c : query.metadata.knowledge_concepts)
      if (std::find(concepts_[d].begin(), concepts_[d].end(), c) != concepts_[d].end()) ++shared;
    out.push_back({d, ids_[d], acc[d] + params_.concept_bonus * shared, Source::exact});
  }
  sort_and_truncate(out, k);
  return out;
}

std::string LexicalIndex::serialize() const {
  ByteWriter w;
  write_header(w, kLexMagic, kLexVersion);
  w.f64(params_.k1);
  w.f64(params_.b);
  w.f64(params_.concept_bonus);
  std::vector<std::string> stops(stop_words_.begin(), stop_words_.end());
  std::sort(stops.begin(), stops.end());
  w.u64(stops.size());
  for (const auto& s : stops) w.str(s);
  w.u64(ids_.size());
  for (std::size_t d = 0; d < ids_.size(); ++d) {
    w.str(ids_[d]);
    w.u32(doc_len_[d]);
    w.u64(concepts_[d].size());
    for (int c : concepts_[d]) w.i64(c);
  }
  std::map<std::string, const std::vector<Posting>*> sorted;
  for (const auto& [t, p] : postings_) sorted[t] = &p;
  w.u64(sorted.size());
  for (const auto& [t, plist] : sorted) {
    w.str(t);
    w.u64(plist->size());
    for (const auto& p : *plist) {
      w.u32(p.doc);
      w.u32(p.tf);
    }
  }
  w.seal();
  return w.data();
}

LexicalIndex LexicalIndex::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  expect_header(r, kLexMagic, kLexVersion);
  LexicalIndex ix;
  ix.params_.k1 = r.f64();
  ix.params_.b = r.f64();
  ix.params_.concept_bonus = r.f64();
  for (auto n = r.u64(); n > 0; --n) ix.stop_words_.insert(r.str());
  const auto docs = r.u64();
  if (docs > bytes.size()) throw CorruptionError("lexical index document count is implausible");
  double total = 0.0;
  for (std::uint64_t d = 0; d < docs; ++d) {
    ix.ids_.push_back(r.str());
    ix.doc_len_.push_back(r.u32());
    total += ix.doc_len_.back();
    std::vector<int> kc(r.u64());
    for (auto& c : kc) c = static_cast<int>(r.i64());
    ix.concepts_.push_back(std::move(kc));
  }
  ix.avg_len_ = docs ? total / static_cast<double>(docs) : 0.0;
  for (auto n = r.u64(); n > 0; --n) {
    auto t = r.str();
    std::vector<Posting> plist(r.u64());
    for (auto& p : plist) {
      p.doc = r.u32();
      p.tf = r.u32();
      if (p.doc >= docs) throw CorruptionError("lexical index posting outside the corpus");
    }
    ix.postings_.emplace(std::move(t), std::move(plist));
  }
  r.verify_seal();
  return ix;
}

bool LexicalIndex::operator==(const LexicalIndex& o) const { return serialize() == o.serialize(); }

VectorIndex::VectorIndex(std::vector<std::string> ids, Mat rows) : ids_(std::move(ids)), rows_(std::move(rows)) {
  if (static_cast<std::size_t>(rows_.rows()) != ids_.size()) throw ValidationError("vector index rows != ids");
  std::unordered_set<std::string> seen;
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    if (std::abs(rows_.row(i).norm() - 1.0) > 1e-6) throw ValidationError("vector index row is not unit norm");
    if (!seen.insert(ids_[static_cast<std::size_t>(i)]).second) throw ValidationError("vector index id repeated");
  }
}

CandidateList VectorIndex::search(const Vec& query, std::size_t k, const std::string& exclude_id) const {
  if (query.size() != rows_.cols())
    throw ValidationError("query dimension " + std::to_string(query.size()) + ", index has " +
                          std::to_string(rows_.cols()));
  CandidateList out;
  out.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i] == exclude_id) continue;
    // plain left-to-right sum: scores do not depend on the SIMD path
    const double* row = rows_.data() + static_cast<Eigen::Index>(i) * rows_.cols();
    double s = 0.0;
    for (Eigen::Index j = 0; j < rows_.cols(); ++j) s += row[j] * query[j];
    out.push_back({i, ids_[i], s, Source::embed});
  }
  sort_and_truncate(out, k);
  return out;
}

TensorArchive VectorIndex::to_archive() const {
  TensorArchive a;
  a.kind = "vindex";
  a.metadata = nlohmann::json{{"ids", ids_}}.dump();
  a.put("rows", rows_);
  return a;
}

VectorIndex VectorIndex::from_archive(const TensorArchive& a) {
  if (a.kind != "vindex") throw VersionError("expected a vindex archive, got '" + a.kind + "'");
  std::vector<std::string> ids;
  try {
    ids = nlohmann::json::parse(a.metadata).at("ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("vindex archive metadata: ") + e.what());
  }
  return VectorIndex(std::move(ids), a.mat("rows"));
}

CandidateList merge_candidates(const CandidateList& exact, const CandidateList& embed, std::size_t n) {
  std::unordered_set<std::string> in_exact, in_embed;
  for (const auto& c : exact) in_exact.insert(c.id);
  for (const auto& c : embed) in_embed.insert(c.id);

  CandidateList out;
  std::unordered_set<std::string> taken;
  for (const auto& c : embed) {
    if (out.size() >= n) break;
    if (in_exact.count(c.id) && taken.insert(c.id).second) out.push_back({c.index, c.id, c.score, Source::both});
  }
  std::vector<const Candidate*> only_exact, only_embed;
  for (const auto& c : exact)
    if (!in_embed.count(c.id)) only_exact.push_back(&c);
  for (const auto& c : embed)
    if (!in_exact.count(c.id)) only_embed.push_back(&c);

  const std::size_t rest = n - out.size();
  std::size_t take_exact = std::min((rest + 1) / 2, only_exact.size());
  std::size_t take_embed = std::min(rest / 2, only_embed.size());
  // backfill from the other channel when one is exhausted
  take_exact = std::min(only_exact.size(), rest - take_embed);
  take_embed = std::min(only_embed.size(), rest - take_exact);

  for (std::size_t i = 0; i < std::max(take_exact, take_embed); ++i) {
    if (i < take_exact && taken.insert(only_exact[i]->id).second) out.push_back(*only_exact[i]);
    if (i < take_embed && taken.insert(only_embed[i]->id).second) out.push_back(*only_embed[i]);
  }
  return out;
}

CandidateList recall(const Exercise& query, const Vec& query_embedding, const RecallContext& ctx,
                     const RecallConfig& cfg) {
  if (!ctx.corpus || !ctx.lexical || !ctx.vectors) throw ConfigError("recall needs a corpus and both indexes");
  const auto exact = ctx.lexical->search(query, cfg.k_exact);
  const auto embed = ctx.vectors->search(query_embedding, cfg.k_embed, query.id);
  auto merged = merge_candidates(exact, embed, cfg.n);
  if (!ctx.dedup) return merged;
  if (!ctx.featurizer) throw ConfigError("duplicate detection needs a featurizer");
  const auto qv = ctx.featurizer->view(query);
  CandidateList kept;
  for (auto& c : merged) {
    const auto cv = ctx.featurizer->view((*ctx.corpus)[c.index]);
    if (ctx.dedup->probability(*ctx.featurizer, qv, cv) < cfg.dedup_threshold) kept.push_back(std::move(c));
  }
  return kept;
}

}  // namespace fse
