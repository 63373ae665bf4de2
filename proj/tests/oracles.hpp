#pragma once

// Brute-force reference implementations the fast paths are checked against.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "fse/recall.hpp"

namespace fse::testing {

// Scores every document from its raw text with no inverted index.
inline CandidateList brute_bm25(const Corpus& corpus, const Exercise& query, std::size_t k,
                                const StopWords& stops = {}, Bm25Params prm = {}) {
  const auto toks = [&](const Exercise& e) { return split_tokens(normalize_text(stem_side(e), stops)); };
  std::vector<std::vector<std::string>> docs;
  double total = 0.0;
  for (const auto& e : corpus.exercises()) {
    docs.push_back(toks(e));
    total += static_cast<double>(docs.back().size());
  }
  const double n = static_cast<double>(docs.size());
  const double avg = total / n;
  const auto q = toks(query);
  const std::set<std::string> terms(q.begin(), q.end());

  CandidateList out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (corpus[d].id == query.id) continue;
    double s = 0.0;
    bool any = false;
    for (const auto& t : terms) {
      const double tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), t));
      if (tf == 0) continue;
      double df = 0;
      for (const auto& other : docs) df += std::find(other.begin(), other.end(), t) != other.end();
      const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      const double norm = prm.k1 * (1.0 - prm.b + prm.b * static_cast<double>(docs[d].size()) / avg);
      s += idf * (tf * (prm.k1 + 1.0)) / (tf + norm);
      any = true;
    }
    if (!any) continue;
    int shared = 0;
    for (int c : query.metadata.knowledge_concepts) {
      const auto& kc = corpus[d].metadata.knowledge_concepts;
      shared += std::find(kc.begin(), kc.end(), c) != kc.end();
    }
    out.push_back({d, corpus[d].id, s + prm.concept_bonus * shared, Source::exact});
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  if (out.size() > k) out.resize(k);
  return out;
}

// Dot product of every row in index order, then a stable descending argsort.
inline CandidateList brute_cosine(const std::vector<std::string>& ids, const Mat& rows, const Vec& q,
                                  std::size_t k, const std::string& exclude = {}) {
  std::vector<double> s(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < rows.cols(); ++j) acc += rows(static_cast<Eigen::Index>(i), j) * q[j];
    s[i] = acc;
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  CandidateList out;
  for (auto i : order) {
    if (ids[i] == exclude) continue;
    if (out.size() == k) break;
    out.push_back({i, ids[i], s[i], Source::embed});
  }
  return out;
}

// Checks merge output against the cardinality contract. Returns an empty
// string on success, otherwise a description of the first violation.
inline std::string check_merge_contract(const CandidateList& exact, const CandidateList& embed, std::size_t n,
                                        const CandidateList& out) {
  std::unordered_set<std::string> ex, em;
  for (const auto& c : exact) ex.insert(c.id);
  for (const auto& c : embed) em.insert(c.id);
  std::vector<std::string> inter, only_ex, only_em;
  for (const auto& c : embed) (ex.count(c.id) ? inter : only_em).push_back(c.id);
  for (const auto& c : exact)
    if (!em.count(c.id)) only_ex.push_back(c.id);

  const std::size_t n_u = std::min(inter.size(), n);
  const std::size_t rest = n - n_u;
  std::size_t want_ex = std::min(only_ex.size(), (rest + 1) / 2);
  std::size_t want_em = std::min(only_em.size(), rest / 2);
  // backfill
  want_ex = std::min(only_ex.size(), rest - want_em);
  want_em = std::min(only_em.size(), rest - want_ex);
  const std::size_t expected = std::min(n, inter.size() + only_ex.size() + only_em.size());

  if (out.size() != expected) return "size " + std::to_string(out.size()) + " != " + std::to_string(expected);
  if (out.size() != n_u + want_ex + want_em) return "split does not add up";
  std::unordered_set<std::string> seen;
  for (const auto& c : out)
    if (!seen.insert(c.id).second) return "duplicate " + c.id;
  for (std::size_t i = 0; i < n_u; ++i) {
    if (out[i].id != inter[i]) return "intersection prefix out of order at " + std::to_string(i);
    if (out[i].source != Source::both) return "intersection member not tagged both";
  }
  std::size_t got_ex = 0, got_em = 0;
  std::size_t next_ex = 0, next_em = 0;
  for (std::size_t i = n_u; i < out.size(); ++i) {
    if (out[i].source == Source::exact) {
      if (next_ex >= only_ex.size() || out[i].id != only_ex[next_ex++]) return "exact tail is not a prefix";
      ++got_ex;
    } else if (out[i].source == Source::embed) {
      if (next_em >= only_em.size() || out[i].id != only_em[next_em++]) return "embed tail is not a prefix";
      ++got_em;
    } else {
      return "tail member tagged both";
    }
  }
  if (got_ex != want_ex || got_em != want_em)
    return "split " + std::to_string(got_ex) + "/" + std::to_string(got_em) + " != " + std::to_string(want_ex) +
           "/" + std::to_string(want_em);
  return {};
}

// Candidate lists with the given channel sizes and overlap; ids are "c<k>".
inline std::pair<CandidateList, CandidateList> make_channels(std::size_t n_exact, std::size_t n_embed,
                                                             std::size_t n_inter) {
  CandidateList exact, embed;
  std::size_t next = 0;
  auto cand = [](std::size_t id, double score, Source s) {
    return Candidate{id, "c" + std::to_string(id), score, s};
  };
  // shared ids interleaved with private ones so the intersection is not a prefix
  std::vector<std::size_t> shared;
  for (std::size_t i = 0; i < n_inter; ++i) shared.push_back(next++);
  std::size_t si = 0;
  for (std::size_t i = 0; i < n_exact; ++i) {
    const bool use_shared = si < n_inter && (i % 2 == 1 || n_exact - i <= n_inter - si);
    exact.push_back(cand(use_shared ? shared[si++] : next++, 100.0 - static_cast<double>(i), Source::exact));
  }
  si = 0;
  for (std::size_t i = 0; i < n_embed; ++i) {
    // embed sees the shared ids in reverse order
    const bool use_shared = si < n_inter && (i % 2 == 0 || n_embed - i <= n_inter - si);
    embed.push_back(
        cand(use_shared ? shared[n_inter - 1 - si++] : next++, 1.0 - 0.01 * static_cast<double>(i), Source::embed));
  }
  return {exact, embed};
}

}  // namespace fse::testing
