#include "fse/pairclf.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace fse {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

PairFeaturizer::View PairFeaturizer::view(const Exercise& e) const {
  const std::string text = stem_side(e);
  View v;
  v.embedding = embed_text(tokenize(text, *vocab_, stop_words_), *params_);
  v.tokens = split_tokens(normalize_text(text, stop_words_));
  return v;
}

Vec PairFeaturizer::features(const View& a, const View& b) {
  const auto d = a.embedding.size();
  Vec f(4 * d + 1);
  f.segment(0, d) = a.embedding;
  f.segment(d, d) = b.embedding;
  f.segment(2 * d, d) = (a.embedding - b.embedding).cwiseAbs();
  f.segment(3 * d, d) = a.embedding.cwiseProduct(b.embedding);
  f[4 * d] = edit_similarity(a.tokens, b.tokens);
  return f;
}

double edit_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[b.size()]) / static_cast<double>(std::max(a.size(), b.size()));
}

void PairClassifier::fit(const std::vector<Vec>& features, const std::vector<int>& labels,
                         const LogisticConfig& cfg) {
  if (features.empty() || features.size() != labels.size())
    throw ValidationError("pair classifier needs aligned, non-empty features and labels");
  const auto n = static_cast<Eigen::Index>(features.size());
  const auto p = features[0].size();
  Mat X(n, p + 1);
  Vec y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i).head(p) = features[static_cast<std::size_t>(i)].transpose();
    X(i, p) = 1.0;
    y[i] = labels[static_cast<std::size_t>(i)];
  }
  Vec w = Vec::Zero(p + 1);
  Vec penalty = Vec::Constant(p + 1, cfg.ridge);
  penalty[p] = 1e-9;  // the bias is left (almost) unpenalised
  for (int it = 0; it < cfg.iterations; ++it) {
    const Vec z = X * w;
    Vec prob(n), curv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = sigmoid(z[i]);
      curv[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-12);
    }
    const Vec g = X.transpose() * (prob - y) + penalty.cwiseProduct(w);
    Mat H = X.transpose() * curv.asDiagonal() * X;
    H.diagonal() += penalty;
    const Vec step = H.ldlt().solve(g);
    w -= step;
    if (step.norm() < 1e-10) break;
  }
  if (!w.allFinite()) throw TrainingError("pair classifier training diverged");
  weights_ = w.head(p);
  bias_ = w[p];
}

void PairClassifier::fit(const PairFeaturizer& f, const std::vector<PairExample>& examples,
                         const LogisticConfig& cfg) {
  std::vector<Vec> xs;
  std::vector<int> ys;
  for (const auto& ex : examples) {
    const auto a = f.view(ex.a), b = f.view(ex.b);
    xs.push_back(PairFeaturizer::features(a, b));
    ys.push_back(ex.y);
    if (symmetric_) {
      xs.push_back(PairFeaturizer::features(b, a));
      ys.push_back(ex.y);
    }
  }
  fit(xs, ys, cfg);
}

double PairClassifier::logit(const Vec& features) const {
  if (!trained()) throw ConfigError(kind_ + " classifier is not trained");
  if (features.size() != weights_.size()) throw ValidationError("pair feature size mismatch");
  return weights_.dot(features) + bias_;
}

double PairClassifier::probability(const PairFeaturizer&, const PairFeaturizer::View& a,
                                   const PairFeaturizer::View& b) const {
  const double z = logit(PairFeaturizer::features(a, b));
  if (!symmetric_) return sigmoid(z);
  return sigmoid(0.5 * (z + logit(PairFeaturizer::features(b, a))));
}

TensorArchive PairClassifier::to_archive() const {
  if (!trained()) throw ConfigError(kind_ + " classifier is not trained");
  TensorArchive a;
  a.kind = "pairclf";
  a.metadata = nlohmann::json{{"kind", kind_}, {"symmetric", symmetric_}}.dump();
  a.put("weights", weights_);
  Vec b(1);
  b[0] = bias_;
  a.put("bias", b);
  return a;
}

PairClassifier PairClassifier::from_archive(const TensorArchive& a) {
  if (a.kind != "pairclf") throw VersionError("expected a pairclf archive, got '" + a.kind + "'");
  PairClassifier c;
  try {
    const auto meta = nlohmann::json::parse(a.metadata);
    c.kind_ = meta.at("kind").get<std::string>();
    c.symmetric_ = meta.at("symmetric").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("pairclf archive metadata: ") + e.what());
  }
  c.weights_ = a.vec("weights");
  c.bias_ = a.vec("bias")[0];
  return c;
}

PairClassifier PairClassifier::load(const std::string& path) {
  return from_archive(TensorArchive::load(path, "pairclf"));
}

std::vector<PairExample> make_dedup_examples(const Corpus& corpus, std::size_t n_anchors, Rng& rng) {
  if (corpus.size() < 2) throw ValidationError("dedup training needs at least 2 exercises");
  std::vector<PairExample> out;
  const auto anchors = rng.sample(corpus.size(), std::min(n_anchors, corpus.size()));
  for (auto i : anchors) {
    const Exercise& e = corpus[i];
    Exercise same = e;
    same.id = e.id + "#copy";
    out.push_back({e, same, 1});
    out.push_back({e, make_distractor_copy(e, rng, e.id + "#date"), 1});
    out.push_back({e, make_degree_change(e, e.id + "#degree"), 0});
    // a different exercise on a shared concept, else any other exercise
    std::vector<std::size_t> related;
    for (std::size_t j = 0; j < corpus.size(); ++j) {
      if (j == i) continue;
      const auto& kc = corpus[j].metadata.knowledge_concepts;
      for (int c : e.metadata.knowledge_concepts)
        if (std::find(kc.begin(), kc.end(), c) != kc.end()) {
          related.push_back(j);
          break;
        }
    }
    // hardest negative: the related exercise closest in normalised tokens
    if (!related.empty()) {
      const auto mine = split_tokens(normalize_text(stem_side(e)));
      std::size_t best = related[0];
      double best_sim = -1.0;
      for (auto j : related) {
        const double sim = edit_similarity(mine, split_tokens(normalize_text(stem_side(corpus[j]))));
        if (sim > best_sim) best_sim = sim, best = j;
      }
      out.push_back({e, corpus[best], 0});
    }
    std::size_t other = rng.below(corpus.size() - 1);
    if (other >= i) ++other;
    out.push_back({e, corpus[related.empty() ? other : related[rng.below(related.size())]], 0});
    out.push_back({e, corpus[other], 0});
  }
  return out;
}

std::vector<PairExample> make_variant_examples(const Corpus& corpus, const std::vector<LabeledPair>& pairs) {
  std::vector<PairExample> out;
  for (const auto& p : pairs) {
    if (!p.variant) continue;
    out.push_back({corpus[corpus.index_of(p.a_id)], corpus[corpus.index_of(p.b_id)],
                   *p.variant == VariantFlag::variant ? 1 : 0});
  }
  return out;
}

}  // namespace fse
