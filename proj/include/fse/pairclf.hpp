#pragma once

#include <string>
#include <vector>

#include "fse/esrm.hpp"

namespace fse {

// Frozen representation used by the pair classifiers: stem embeddings and
// normalised stem tokens of arbitrary exercises.
class PairFeaturizer {
 public:
  PairFeaturizer(const Vocab& vocab, const EsrmParams& params, StopWords stop_words = {})
      : vocab_(&vocab), params_(&params), stop_words_(std::move(stop_words)) {}

  struct View {
    Vec embedding;
    std::vector<std::string> tokens;
  };
  View view(const Exercise& e) const;

  // [u, v, |u - v|, u * v, edit similarity]
  static Vec features(const View& a, const View& b);
  Vec features(const Exercise& a, const Exercise& b) const { return features(view(a), view(b)); }
  int dim() const { return 4 * params_->dim() + 1; }

 private:
  const Vocab* vocab_;
  const EsrmParams* params_;
  StopWords stop_words_;
};

// 1 - Levenshtein(a, b) / max(|a|, |b|) over token lists; 1 for two empty lists.
double edit_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct PairExample {
  Exercise a;
  Exercise b;
  int y = 0;
};

struct LogisticConfig {
  double ridge = 1e-3;
  int iterations = 30;
};

// Logistic head over pair features. A symmetric classifier averages the
// logits of both argument orders, so p(a, b) == p(b, a) exactly.
class PairClassifier {
 public:
  PairClassifier() = default;
  PairClassifier(std::string kind, bool symmetric) : kind_(std::move(kind)), symmetric_(symmetric) {}

  bool trained() const { return weights_.size() > 0; }
  bool symmetric() const { return symmetric_; }
  const std::string& kind() const { return kind_; }

  // Newton iterations on the ridge-penalised log-likelihood.
  void fit(const std::vector<Vec>& features, const std::vector<int>& labels, const LogisticConfig& config = {});
  void fit(const PairFeaturizer& f, const std::vector<PairExample>& examples, const LogisticConfig& config = {});

  double logit(const Vec& features) const;
  // Throws ConfigError when untrained.
  double probability(const PairFeaturizer& f, const PairFeaturizer::View& a, const PairFeaturizer::View& b) const;
  double probability(const PairFeaturizer& f, const Exercise& a, const Exercise& b) const {
    return probability(f, f.view(a), f.view(b));
  }

  TensorArchive to_archive() const;
  static PairClassifier from_archive(const TensorArchive& a);
  void save(const std::string& path) const { to_archive().save(path); }
  static PairClassifier load(const std::string& path);

 private:
  std::string kind_ = "pair";
  bool symmetric_ = true;
  Vec weights_;
  double bias_ = 0.0;
};

// Training pairs for duplicate detection derived from a corpus: identical
// copies and distractor-date copies are duplicates; degree changes,
// the closest same-concept exercise, a random same-concept exercise
// and a random exercise are not.
std::vector<PairExample> make_dedup_examples(const Corpus& corpus, std::size_t n_anchors, Rng& rng);

// Variant-flagged similar pairs as training examples (variant = 1).
std::vector<PairExample> make_variant_examples(const Corpus& corpus, const std::vector<LabeledPair>& pairs);

}  // namespace fse
