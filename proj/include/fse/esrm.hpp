#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fse/common.hpp"
#include "fse/corpus.hpp"
#include "fse/snapshot.hpp"
#include "fse/textnorm.hpp"

namespace fse {

enum class Pooling { sum, mean };

// Intermediate values of one encoder pass, kept for the backward pass.
struct EncodeCache {
  std::vector<int> ids;
  double pool_scale = 1.0;
  Vec pooled;
  Vec activated;  // tanh(W * pooled + b)
  Vec out;        // activated / |activated|
  double norm = 0.0;
  bool degenerate = false;
};

// Pooled token embeddings followed by one tanh transform and L2
// normalisation: Norm(tanh(W * pool(emb[ids]) + b)).
struct TextEncoder {
  Mat embedding;  // vocab x d
  Mat transform;  // d x d
  Vec bias;       // d

  int dim() const { return static_cast<int>(transform.rows()); }
  int vocab_size() const { return static_cast<int>(embedding.rows()); }

  Vec encode(std::span<const int> ids, Pooling pooling, EncodeCache* cache = nullptr) const;
  // Accumulates dL/dparams into grad given dL/d(out).
  void backward(const EncodeCache& cache, const Vec& grad_out, TextEncoder& grad) const;

  static TextEncoder zeros(int vocab, int d);
  static TextEncoder random(int vocab, int d, Rng& rng, double scale = 0.05);
  void set_zero();
};

// All trainable parameters of the representation model.
struct EsrmParams {
  TextEncoder encoder;
  Mat image_proj;  // d x d_img
  Vec image_bias;  // d
  Mat type_head;   // |types| x d
  Vec type_bias;
  Mat difficulty_head;  // levels x d
  Vec difficulty_bias;
  Mat concept_head;  // |concepts| x d
  Vec concept_bias;
  std::uint64_t seed = 0;

  int dim() const { return encoder.dim(); }
  int image_dim() const { return static_cast<int>(image_proj.cols()); }

  // Uniform in [-0.05, 0.05] from the seed.
  static EsrmParams init(int vocab, int d, const MetadataSchema& schema, std::uint64_t seed);
  EsrmParams zeros_like() const;
  void set_zero();

  // Visits every tensor as (name, data, rows, cols), in a fixed order.
  template <typename F>
  void for_each(F&& f);
  template <typename F>
  void for_each(F&& f) const {
    const_cast<EsrmParams*>(this)->for_each([&](const char* name, double* p, Eigen::Index r, Eigen::Index c) {
      f(name, static_cast<const double*>(p), r, c);
    });
  }

  void axpy(double a, const EsrmParams& g);  // this += a * g
  bool all_finite() const;
  bool operator==(const EsrmParams& o) const;

  TensorArchive to_archive() const;
  static EsrmParams from_archive(const TensorArchive& a);
  void save(const std::string& path) const { to_archive().save(path); }
  static EsrmParams load(const std::string& path) { return from_archive(TensorArchive::load(path, "esrm")); }
};

template <typename F>
void EsrmParams::for_each(F&& f) {
  auto m = [&](const char* name, Mat& x) { f(name, x.data(), x.rows(), x.cols()); };
  auto v = [&](const char* name, Vec& x) { f(name, x.data(), x.size(), Eigen::Index{1}); };
  m("embedding", encoder.embedding);
  m("transform", encoder.transform);
  v("transform_bias", encoder.bias);
  m("image_proj", image_proj);
  v("image_bias", image_bias);
  m("type_head", type_head);
  v("type_bias", type_bias);
  m("difficulty_head", difficulty_head);
  v("difficulty_bias", difficulty_bias);
  m("concept_head", concept_head);
  v("concept_bias", concept_bias);
}

// Unit-norm stem embedding; throws ValidationError on an empty sequence.
Vec embed_text(const TokenSequence& tokens, const EsrmParams& params);

struct ImageCache {
  Vec feat;
  Vec linear;
  Vec out;
  double norm = 0.0;
  bool degenerate = false;
};

// Norm(image_proj * feat + image_bias). A zero pre-activation falls back to
// the first basis vector.
Vec project_image(const Vec& feat, const EsrmParams& params, ImageCache* cache = nullptr);
void project_image_backward(const ImageCache& cache, const Vec& grad_out, const EsrmParams& params,
                            EsrmParams& grad);

struct ContrastiveResult {
  double loss = 0.0;
  std::vector<double> per_anchor;
  std::vector<Vec> grad_anchors;
  std::vector<Vec> grad_positives;
};

// In-batch softmax contrastive loss: anchor i is pulled towards positive i
// and away from positives j != i. Mean over anchors.
ContrastiveResult contrastive_loss(const std::vector<Vec>& anchors, const std::vector<Vec>& positives, double tau);

// Per-example targets of the metadata heads.
struct MetadataTargets {
  int type = 0;
  int difficulty = 0;  // 0-based slot
  Vec concepts;        // distribution summing to 1
};

struct MetadataLoss {
  double type = 0.0;
  double difficulty = 0.0;
  double concepts = 0.0;
  Vec grad_embedding;
};

// Cross-entropy of the three heads stacked on a stem embedding. Head
// gradients, each scaled by its weight, are accumulated into grad when given.
MetadataLoss metadata_task_loss(const Vec& embedding, const MetadataTargets& targets, const EsrmParams& params,
                                EsrmParams* grad = nullptr, double w_type = 1.0, double w_difficulty = 1.0,
                                double w_concept = 1.0);

// Token ids and targets of one exercise, computed once per corpus.
struct PreparedExercise {
  std::vector<int> stem;
  std::vector<int> analysis;
  MetadataTargets targets;
  std::optional<Vec> image;  // first image, if any
};

std::vector<PreparedExercise> prepare_corpus(const Corpus& corpus, const Vocab& vocab,
                                             const StopWords& stop_words = {});

struct PretrainConfig {
  double w_contrastive = 1.0;
  double w_type = 0.5;
  double w_difficulty = 0.5;
  double w_concept = 0.5;
  double w_image = 0.5;
  int epochs = 20;
  double lr = 0.05;
  int batch = 32;
  double tau = 0.1;
  std::uint64_t seed = 7;
};

struct PretrainLoss {
  double total = 0.0;
  double contrastive = 0.0;
  double type = 0.0;
  double difficulty = 0.0;
  double concepts = 0.0;
  double image = 0.0;
};

// Weighted pre-training loss of one batch; adds gradients into grad when
// given. Items without analysis tokens skip the contrastive term and items
// without an image skip the image term; each term needs two participants.
PretrainLoss pretrain_batch_loss(const EsrmParams& params, const std::vector<const PreparedExercise*>& batch,
                                 const PretrainConfig& config, EsrmParams* grad = nullptr);

struct PretrainResult {
  EsrmParams params;
  std::vector<PretrainLoss> history;  // mean per epoch
};

PretrainResult pretrain(const std::vector<PreparedExercise>& data, EsrmParams init, const PretrainConfig& config);

struct FineTuneConfig {
  int epochs = 5;
  double lr = 0.01;
  int batch = 16;
  double tau = 0.1;
  int negatives = 8;
  std::uint64_t seed = 7;
};

// One anchor, its annotated similar exercise and sampled negatives, as corpus
// indices.
struct FineTuneExample {
  std::size_t anchor;
  std::size_t positive;
  std::vector<std::size_t> negatives;
};

// Softmax contrastive loss of anchor stems against [positive, negatives...]
// stems, averaged over the batch.
double finetune_batch_loss(const EsrmParams& params, const std::vector<PreparedExercise>& data,
                           std::span<const FineTuneExample> batch, double tau, EsrmParams* grad = nullptr);

// Similar pairs as (anchor, positive) with negatives drawn uniformly without
// replacement from the bank, excluding the anchor and its annotated similars.
std::vector<FineTuneExample> sample_finetune_examples(const Corpus& corpus, const std::vector<LabeledPair>& pairs,
                                                      int negatives, Rng& rng);

struct FineTuneResult {
  EsrmParams params;
  std::vector<double> batch_losses;  // loss of each batch before its update
};

FineTuneResult fine_tune(const std::vector<PreparedExercise>& data, const Corpus& corpus,
                         const std::vector<LabeledPair>& pairs, EsrmParams params, const FineTuneConfig& config);

// Stem embeddings of every exercise, row i for corpus[i]. Rows are
// independent, so the result does not depend on threads.
Mat embed_corpus(const std::vector<PreparedExercise>& data, const EsrmParams& params, int threads = 1);

// One line per exercise: id followed by d values printed with %.17g.
std::string format_embeddings(const Corpus& corpus, const Mat& embeddings);
void export_embeddings(const Corpus& corpus, const Mat& embeddings, const std::string& path);

}  // namespace fse
