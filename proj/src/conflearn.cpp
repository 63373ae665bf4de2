#include "fse/conflearn.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

namespace fse {

PruneStrategy parse_prune_strategy(const std::string& s) {
  if (s == "noise_rate") return PruneStrategy::noise_rate;
  if (s == "by_class") return PruneStrategy::by_class;
  throw ConfigError("unknown prune strategy '" + s + "' (expected noise_rate or by_class)");
}

const char* prune_strategy_name(PruneStrategy s) {
  return s == PruneStrategy::noise_rate ? "noise_rate" : "by_class";
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("confidence learning needs at least 2 folds");
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("labels must be 0 or 1");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (int c = 0; c < 2; ++c)
    if (by_class[c].size() < static_cast<std::size_t>(folds))
      throw ValidationError("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                            " pairs, fewer than " + std::to_string(folds) + " folds; re-stratify with fewer folds");
  Rng rng(seed);
  std::vector<int> fold(labels.size(), 0);
  for (auto& members : by_class) {
    rng.shuffle(members);
    for (std::size_t k = 0; k < members.size(); ++k) fold[members[k]] = static_cast<int>(k % folds);
  }
  return fold;
}

std::vector<double> out_of_fold_probs(const std::vector<LabeledPair>& pairs, const Corpus& corpus,
                                      const RankTexts& texts, const RankerParams& init, const RankConfig& rank,
                                      const ConfLearnConfig& cfg) {
  if (pairs.size() < static_cast<std::size_t>(2 * cfg.folds))
    throw ValidationError("out-of-fold estimation needs at least 2 pairs per fold");
  std::vector<int> labels;
  for (const auto& p : pairs) labels.push_back(p.y());
  const auto fold = stratified_folds(labels, cfg.folds, cfg.seed);
  Rng master(cfg.seed);
  std::vector<std::uint64_t> fold_seed(static_cast<std::size_t>(cfg.folds));
  for (auto& s : fold_seed) s = master.fork();

  std::vector<double> probs(pairs.size(), -1.0);
  auto run_fold = [&](int f) {
    std::vector<LabeledPair> train;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (fold[i] != f) train.push_back(pairs[i]);
    RankConfig rc = rank;
    rc.tasks = {true, false, false};
    rc.moe = false;
    rc.epochs = cfg.oof_epochs;
    rc.seed = fold_seed[static_cast<std::size_t>(f)];
    const auto model = train_ranker(train, corpus, texts, init, rc).params;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (fold[i] == f)
        probs[i] = score_pair(texts.stem[corpus.index_of(pairs[i].a_id)], texts.stem[corpus.index_of(pairs[i].b_id)],
                              model);
  };
  const int threads = std::clamp(cfg.threads, 1, cfg.folds);
  if (threads == 1) {
    for (int f = 0; f < cfg.folds; ++f) run_fold(f);
  } else {
    // each fold writes a disjoint set of entries
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.folds));
    for (int start = 0; start < cfg.folds; start += threads) {
      std::vector<std::jthread> pool;
      for (int f = start; f < std::min(cfg.folds, start + threads); ++f)
        pool.emplace_back([&, f] {
          try {
            run_fold(f);
          } catch (...) {
            errors[static_cast<std::size_t>(f)] = std::current_exception();
          }
        });
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return probs;
}

ConfidentJoint build_confident_joint(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size()) throw ValidationError("probabilities and labels are not aligned");
  ConfidentJoint j;
  std::array<double, 2> sum{};
  std::array<std::size_t, 2> n{};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1) throw ValidationError("labels must be 0 or 1");
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) throw ValidationError("probability outside [0, 1]");
    sum[y] += y == 1 ? probs[i] : 1.0 - probs[i];
    ++n[y];
  }
  for (int c = 0; c < 2; ++c) {
    if (n[c] == 0) throw ValidationError("class " + std::to_string(c) + " has no examples");
    j.thresholds[c] = sum[c] / static_cast<double>(n[c]);
  }
  // slack so a probability equal to its class mean is not lost to rounding
  // in the mean, e.g. (0.9 + 0.8 + 0.7) / 3 > 0.8 in binary floating point
  constexpr double kSlack = 1e-9;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::array<double, 2> p{1.0 - probs[i], probs[i]};
    int best = -1;
    for (int c = 0; c < 2; ++c)
      if (p[c] >= j.thresholds[c] - kSlack && (best < 0 || p[c] > p[best])) best = c;
    if (best >= 0) ++j.counts[labels[i]][best];
  }
  return j;
}

PruneResult prune(const ConfidentJoint& joint, const std::vector<double>& probs, const std::vector<int>& labels,
                  PruneStrategy strategy) {
  if (probs.size() != labels.size()) throw ValidationError("probabilities and labels are not aligned");
  std::vector<char> drop(probs.size(), 0);
  auto self = [&](std::size_t i) { return labels[i] == 1 ? probs[i] : 1.0 - probs[i]; };
  for (int i = 0; i < 2; ++i) {
    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k] == i) members.push_back(k);
    // with two classes the only other class is 1 - i; both strategies order
    // by the same key, P(1 - i) - P(i) = 1 - 2 P(i), but count differently
    // once more classes exist
    std::size_t n = joint.counts[i][1 - i];
    if (strategy == PruneStrategy::by_class) {
      n = 0;
      for (int j = 0; j < 2; ++j)
        if (j != i) n += joint.counts[i][j];
    }
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) { return self(a) < self(b); });
    for (std::size_t k = 0; k < std::min(n, members.size()); ++k) drop[members[k]] = 1;
  }
  PruneResult r;
  for (std::size_t k = 0; k < probs.size(); ++k) (drop[k] ? r.pruned : r.kept).push_back(k);
  return r;
}

nlohmann::json CleanReport::to_json() const {
  nlohmann::json j;
  j["joint"] = {{joint.counts[0][0], joint.counts[0][1]}, {joint.counts[1][0], joint.counts[1][1]}};
  j["thresholds"] = {joint.thresholds[0], joint.thresholds[1]};
  j["n_pairs"] = n_pairs;
  j["n_cleaned"] = n_cleaned;
  j["prune_count"] = prune_count();
  j["pruned_ids"] = pruned_ids;
  j["p5_before"] = p5_before ? nlohmann::json(*p5_before) : nlohmann::json(nullptr);
  j["p5_after"] = p5_after ? nlohmann::json(*p5_after) : nlohmann::json(nullptr);
  return j;
}

CleanResult clean_and_retrain(const std::vector<LabeledPair>& pairs, const Corpus& corpus, const RankTexts& texts,
                              const RankerParams& init, const RankConfig& rank, const ConfLearnConfig& cfg,
                              const std::function<double(const RankerParams&)>& evaluate) {
  std::vector<int> labels;
  for (const auto& p : pairs) labels.push_back(p.y());
  const auto probs = out_of_fold_probs(pairs, corpus, texts, init, rank, cfg);
  CleanResult res;
  res.report.joint = build_confident_joint(probs, labels);
  const auto split = prune(res.report.joint, probs, labels, cfg.strategy);
  for (auto k : split.kept) res.cleaned.push_back(pairs[k]);
  for (auto k : split.pruned) {
    res.pruned.push_back(pairs[k]);
    res.report.pruned_ids.push_back(pairs[k].a_id + "|" + pairs[k].b_id);
  }
  res.report.n_pairs = pairs.size();
  res.report.n_cleaned = res.cleaned.size();
  res.before = train_ranker(pairs, corpus, texts, init, rank).params;
  res.after = train_ranker(res.cleaned, corpus, texts, init, rank).params;
  if (evaluate) {
    res.report.p5_before = evaluate(res.before);
    res.report.p5_after = evaluate(res.after);
  }
  return res;
}

}  // namespace fse
