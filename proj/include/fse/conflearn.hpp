#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fse/ranking.hpp"

namespace fse {

// C[noisy][inferred] counts with the per-class thresholds used to build it.
struct ConfidentJoint {
  std::array<std::array<std::size_t, 2>, 2> counts{};
  std::array<double, 2> thresholds{};

  std::size_t total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
  bool diagonal() const { return counts[0][1] == 0 && counts[1][0] == 0; }
};

enum class PruneStrategy { noise_rate, by_class };
PruneStrategy parse_prune_strategy(const std::string& s);
const char* prune_strategy_name(PruneStrategy s);

struct ConfLearnConfig {
  int folds = 5;
  int oof_epochs = 3;
  PruneStrategy strategy = PruneStrategy::noise_rate;
  std::uint64_t seed = 7;
  int threads = 1;
};

// Fold index per pair, stratified by noisy label. Throws ValidationError when
// a class has fewer members than folds (some fold would lack it).
std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed);

// P(label = 1) for every pair from a T1-only ranker trained on the other
// folds. Per-fold seeds derive from config.seed, so the result does not
// depend on config.threads.
std::vector<double> out_of_fold_probs(const std::vector<LabeledPair>& pairs, const Corpus& corpus,
                                      const RankTexts& texts, const RankerParams& init, const RankConfig& rank,
                                      const ConfLearnConfig& config);

// t_c = mean P(c) over pairs noisily labeled c; a pair counts toward
// C[y][argmax of classes with P(c) >= t_c] and is skipped when none qualifies.
ConfidentJoint build_confident_joint(const std::vector<double>& probs, const std::vector<int>& labels);

struct PruneResult {
  std::vector<std::size_t> kept;    // indices into the input, ascending
  std::vector<std::size_t> pruned;  // ascending
};

// noise_rate: for every off-diagonal cell C[i][j], the C[i][j] pairs labeled
// i with the largest margin P(j) - P(i). by_class: for every class i, the
// sum_j!=i C[i][j] pairs labeled i with the lowest P(i). Ties by index.
PruneResult prune(const ConfidentJoint& joint, const std::vector<double>& probs, const std::vector<int>& labels,
                  PruneStrategy strategy = PruneStrategy::noise_rate);

struct CleanReport {
  ConfidentJoint joint;
  std::vector<std::string> pruned_ids;  // "a|b" per pruned pair
  std::size_t n_pairs = 0;
  std::size_t n_cleaned = 0;
  std::optional<double> p5_before;
  std::optional<double> p5_after;

  std::size_t prune_count() const { return n_pairs - n_cleaned; }
  nlohmann::json to_json() const;
};

struct CleanResult {
  std::vector<LabeledPair> cleaned;
  std::vector<LabeledPair> pruned;
  RankerParams before;  // trained on all pairs
  RankerParams after;   // trained on the cleaned pairs
  CleanReport report;
};

// Out-of-fold estimation, joint, pruning and retraining. When given,
// evaluate() scores a ranker (P@5) for the before/after report fields.
CleanResult clean_and_retrain(const std::vector<LabeledPair>& pairs, const Corpus& corpus, const RankTexts& texts,
                              const RankerParams& init, const RankConfig& rank, const ConfLearnConfig& config,
                              const std::function<double(const RankerParams&)>& evaluate = {});

}  // namespace fse
