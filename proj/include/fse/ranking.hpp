#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fse/esrm.hpp"
#include "fse/recall.hpp"

namespace fse {

enum class Task { t1 = 0, t2 = 1, t3 = 2 };
inline constexpr int kTasks = 3;
const char* task_name(Task t);

// One training example of a ranking task: stem/stem (T1), analysis/analysis
// (T2) or stem/analysis (T3).
struct TaskInstance {
  Task task = Task::t1;
  std::vector<int> left;
  std::vector<int> right;
  int label = 0;
  bool operator==(const TaskInstance&) const = default;
};

// Token sequences of each exercise for the ranking texts.
struct RankTexts {
  std::vector<std::vector<int>> stem;      // stem + options
  std::vector<std::vector<int>> analysis;  // answer + analysis, may be empty
};
RankTexts prepare_rank_texts(const Corpus& corpus, const Vocab& vocab, const StopWords& stop_words = {});
double mean_stem_length(const RankTexts& texts);

struct InstanceLog {
  std::size_t skipped_no_analysis = 0;
  std::size_t t3_fallback_uniform = 0;
};

// T1(stemA, stemB, y), T2(anaA, anaB, y), T3+(stemA, anaA), T3+(stemB, anaB)
// and one T3-: (stemA, anaB) for a dissimilar pair, else stemA against the
// analysis of a random exercise sharing a concept with A (uniform fallback).
// Pairs without analysis text on either side only yield T1.
std::vector<TaskInstance> build_task_instances(const LabeledPair& pair, const Corpus& corpus, const RankTexts& texts,
                                               Rng& rng, InstanceLog* log = nullptr);
std::vector<TaskInstance> build_task_instances(const std::vector<LabeledPair>& pairs, const Corpus& corpus,
                                               const RankTexts& texts, std::uint64_t seed,
                                               InstanceLog* log = nullptr);

// Per-task parameters: feature projection, 2-way head and the task's gate
// expert (d -> d -> d -> 1).
struct TaskParams {
  Mat proj;  // d x 2d
  Vec proj_bias;
  Mat head;  // 2 x d
  Vec head_bias;
  Mat gate1;  // d x d
  Vec gate1_bias;
  Mat gate2;  // d x d
  Vec gate2_bias;
  Mat gate3;  // 1 x d
  Vec gate3_bias;
};

struct RankerParams {
  TextEncoder encoder;  // shared across tasks, mean pooling
  std::array<TaskParams, kTasks> tasks;
  std::uint64_t seed = 0;

  int dim() const { return encoder.dim(); }
  bool trained() const { return encoder.embedding.size() > 0; }

  // Copies the encoder; task parameters uniform in [-0.05, 0.05] from the seed.
  // The ranker mean-pools while the backbone was trained on sums, so the
  // copied transform is multiplied by length_scale (typically the mean token
  // count) to keep activations at their trained magnitude.
  static RankerParams init(const TextEncoder& encoder, std::uint64_t seed, double length_scale = 1.0);
  RankerParams zeros_like() const;
  void set_zero();

  template <typename F>
  void for_each(F&& f);
  template <typename F>
  void for_each(F&& f) const {
    const_cast<RankerParams*>(this)->for_each([&](const char* name, double* p, Eigen::Index r, Eigen::Index c) {
      f(name, static_cast<const double*>(p), r, c);
    });
  }

  void axpy(double a, const RankerParams& g);
  bool all_finite() const;
  bool operator==(const RankerParams& o) const;

  TensorArchive to_archive() const;
  static RankerParams from_archive(const TensorArchive& a);
  void save(const std::string& path) const { to_archive().save(path); }
  static RankerParams load(const std::string& path) { return from_archive(TensorArchive::load(path, "ranker")); }
};

template <typename F>
void RankerParams::for_each(F&& f) {
  auto m = [&](const std::string& name, Mat& x) { f(name.c_str(), x.data(), x.rows(), x.cols()); };
  auto v = [&](const std::string& name, Vec& x) { f(name.c_str(), x.data(), x.size(), Eigen::Index{1}); };
  m("embedding", encoder.embedding);
  m("transform", encoder.transform);
  v("transform_bias", encoder.bias);
  for (int t = 0; t < kTasks; ++t) {
    const std::string p = std::string(task_name(static_cast<Task>(t))) + ".";
    auto& tp = tasks[static_cast<std::size_t>(t)];
    m(p + "proj", tp.proj);
    v(p + "proj_bias", tp.proj_bias);
    m(p + "head", tp.head);
    v(p + "head_bias", tp.head_bias);
    m(p + "gate1", tp.gate1);
    v(p + "gate1_bias", tp.gate1_bias);
    m(p + "gate2", tp.gate2);
    v(p + "gate2_bias", tp.gate2_bias);
    m(p + "gate3", tp.gate3);
    v(p + "gate3_bias", tp.gate3_bias);
  }
}

// Logit of a gate expert on a task feature vector.
double gate_logit(const TaskParams& tp, const Vec& feature);

// Softmax of the expert logits over the active tasks; inactive tasks get 0.
std::array<double, kTasks> moe_coefficients(const std::array<Vec, kTasks>& features, const RankerParams& params,
                                            const std::array<bool, kTasks>& active = {true, true, true});

struct RankConfig {
  double lr = 0.01;
  int epochs = 3;
  int batch = 32;
  std::array<bool, kTasks> tasks{true, true, true};
  bool moe = true;
  std::array<double, kTasks> alpha{1.0 / 3, 1.0 / 3, 1.0 / 3};  // used when moe is off
  std::uint64_t seed = 7;
};

struct MultitaskLoss {
  double total = 0.0;
  std::array<double, kTasks> task_loss{};
  std::array<double, kTasks> alpha{};
  std::array<std::size_t, kTasks> count{};
};

// L = sum_t alpha_t * L_t with L_t the mean cross-entropy of task t in the
// batch. Under moe the coefficients come from the gate over batch-mean task
// features; otherwise config.alpha renormalised over the tasks present.
// Absent tasks contribute 0 and are masked from the softmax.
MultitaskLoss multitask_loss(const RankerParams& params, std::span<const TaskInstance> batch,
                             const RankConfig& config, RankerParams* grad = nullptr);

struct RankTrainResult {
  RankerParams params;
  std::vector<MultitaskLoss> history;  // mean per epoch
};

// SGD over task instances of the enabled tasks, reshuffled each epoch.
RankTrainResult train_ranker(const std::vector<LabeledPair>& pairs, const Corpus& corpus, const RankTexts& texts,
                             RankerParams init, const RankConfig& config);

// T1 positive-class probability; throws ConfigError when untrained.
double score_pair(std::span<const int> a, std::span<const int> b, const RankerParams& params);

// Re-scores candidates with score_pair, sorted descending, ties by id.
CandidateList rank(std::span<const int> query, const CandidateList& candidates, const RankTexts& texts,
                   const RankerParams& params);

}  // namespace fse
