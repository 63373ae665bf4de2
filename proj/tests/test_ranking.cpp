#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "fse/ranking.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace fse;
using namespace fse::testing;

namespace {

double cross_entropy_t1(const RankerParams& p, const std::vector<TaskInstance>& batch) {
  double s = 0.0;
  for (const auto& x : batch) {
    const double q = score_pair(x.left, x.right, p);
    s -= std::log(x.label == 1 ? q : 1.0 - q);
  }
  return s / static_cast<double>(batch.size());
}

struct Fixture {
  SyntheticData data;
  Vocab vocab;
  RankTexts texts;
  RankerParams init;
  RankTrainResult trained;
  RankConfig cfg;

  Fixture() {
    SyntheticSpec spec;
    spec.n_templates = 6;
    spec.per_template = 15;
    spec.noise_rate = 0.0;
    spec.n_pairs = 300;
    data = generate_synthetic(spec);
    vocab = build_vocab(data.corpus);
    const auto prep = prepare_corpus(data.corpus, vocab);
    PretrainConfig pc;
    pc.epochs = 8;
    const auto esrm = pretrain(prep, EsrmParams::init(vocab.size(), 16, data.corpus.schema(), 3), pc).params;
    texts = prepare_rank_texts(data.corpus, vocab);
    init = RankerParams::init(esrm.encoder, 5, mean_stem_length(texts));
    trained = train_ranker(data.pairs, data.corpus, texts, init, cfg);
  }

  static const Fixture& get() {
    static const Fixture f;
    return f;
  }
};

}  // namespace

TEST(RankGradients, MoeLossMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto toy = make_toy_ranker(seed);
    RankConfig cfg;
    const auto gc = check_param_gradients(toy.params, [&](const RankerParams& p, RankerParams* g) {
      return multitask_loss(p, toy.batch, cfg, g).total;
    });
    EXPECT_LT(gc.max_rel, 1e-4) << "seed " << seed << ": " << gc.worst;
  }
}

TEST(RankGradients, FixedWeightsMatchFiniteDifferences) {
  for (std::uint64_t seed = 21; seed <= 26; ++seed) {
    const auto toy = make_toy_ranker(seed);
    RankConfig cfg;
    cfg.moe = false;
    cfg.alpha = {0.5, 0.3, 0.2};
    const auto gc = check_param_gradients(toy.params, [&](const RankerParams& p, RankerParams* g) {
      return multitask_loss(p, toy.batch, cfg, g).total;
    });
    EXPECT_LT(gc.max_rel, 1e-4) << "seed " << seed << ": " << gc.worst;
  }
}

TEST(RankGradients, AbsentTaskMatchesFiniteDifferences) {
  for (std::uint64_t seed = 31; seed <= 36; ++seed) {
    const auto toy = make_toy_ranker(seed, {true, false, true});
    RankConfig cfg;
    const auto gc = check_param_gradients(toy.params, [&](const RankerParams& p, RankerParams* g) {
      return multitask_loss(p, toy.batch, cfg, g).total;
    });
    EXPECT_LT(gc.max_rel, 1e-4) << "seed " << seed << ": " << gc.worst;
  }
}

TEST(Moe, CoefficientsSumToOne) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto toy = make_toy_ranker(seed);
    Rng rng(seed);
    std::array<Vec, kTasks> fe;
    for (auto& f : fe) f = Vec::NullaryExpr(toy.params.dim(), [&] { return rng.uniform(-1, 1); });
    const auto a = moe_coefficients(fe, toy.params);
    EXPECT_NEAR(a[0] + a[1] + a[2], 1.0, 1e-12);
    for (double x : a) EXPECT_GE(x, 0.0);
  }
}

TEST(Moe, ZeroGateIsUniform) {
  auto p = make_toy_ranker(3).params;
  for (auto& tp : p.tasks) {
    tp.gate3.setZero();
    tp.gate3_bias.setZero();
  }
  std::array<Vec, kTasks> fe;
  for (auto& f : fe) f = Vec::Ones(p.dim());
  for (double x : moe_coefficients(fe, p)) EXPECT_DOUBLE_EQ(x, 1.0 / 3.0);
  const auto masked = moe_coefficients(fe, p, {true, false, true});
  EXPECT_DOUBLE_EQ(masked[0], 0.5);
  EXPECT_EQ(masked[1], 0.0);
  EXPECT_DOUBLE_EQ(masked[2], 0.5);
}

TEST(MultitaskLoss, FrozenT1WeightIsPlainCrossEntropy) {
  const auto toy = make_toy_ranker(4);
  RankConfig cfg;
  cfg.moe = false;
  cfg.alpha = {1.0, 0.0, 0.0};
  std::vector<TaskInstance> t1;
  for (const auto& x : toy.batch)
    if (x.task == Task::t1) t1.push_back(x);
  const auto out = multitask_loss(toy.params, toy.batch, cfg);
  EXPECT_NEAR(out.total, cross_entropy_t1(toy.params, t1), 1e-12);
  EXPECT_EQ(out.alpha[0], 1.0);
}

TEST(MultitaskLoss, UniformWeightsAverageTaskLosses) {
  const auto toy = make_toy_ranker(5);
  RankConfig cfg;
  cfg.moe = false;
  const auto out = multitask_loss(toy.params, toy.batch, cfg);
  EXPECT_NEAR(out.total, (out.task_loss[0] + out.task_loss[1] + out.task_loss[2]) / 3.0, 1e-12);
  // the weighting itself on round numbers
  const double total = out.alpha[0] * 0.3 + out.alpha[1] * 0.6 + out.alpha[2] * 0.9;
  EXPECT_NEAR(total, 0.6, 1e-12);
}

TEST(MultitaskLoss, AbsentTaskContributesZero) {
  const auto toy = make_toy_ranker(6, {true, true, false});
  for (bool moe : {true, false}) {
    RankConfig cfg;
    cfg.moe = moe;
    const auto out = multitask_loss(toy.params, toy.batch, cfg);
    EXPECT_EQ(out.count[2], 0u);
    EXPECT_EQ(out.task_loss[2], 0.0);
    EXPECT_EQ(out.alpha[2], 0.0);
    EXPECT_NEAR(out.alpha[0] + out.alpha[1], 1.0, 1e-12);
  }
}

TEST(MultitaskLoss, ZeroFixedWeightsRejected) {
  const auto toy = make_toy_ranker(7, {false, true, false});
  RankConfig cfg;
  cfg.moe = false;
  cfg.alpha = {1.0, 0.0, 0.0};
  EXPECT_THROW(multitask_loss(toy.params, toy.batch, cfg), ConfigError);
}

TEST(Instances, DissimilarPairNegativeUsesOtherAnalysis) {
  const auto& f = Fixture::get();
  const auto& c = f.data.corpus;
  LabeledPair p{c[0].id, c[40].id, PairLabel::dissimilar, {}, {}};
  Rng rng(1);
  const auto xs = build_task_instances(p, c, f.texts, rng);
  ASSERT_EQ(xs.size(), 5u);
  EXPECT_EQ(xs[0], (TaskInstance{Task::t1, f.texts.stem[0], f.texts.stem[40], 0}));
  EXPECT_EQ(xs[1], (TaskInstance{Task::t2, f.texts.analysis[0], f.texts.analysis[40], 0}));
  EXPECT_EQ(xs[2], (TaskInstance{Task::t3, f.texts.stem[0], f.texts.analysis[0], 1}));
  EXPECT_EQ(xs[3], (TaskInstance{Task::t3, f.texts.stem[40], f.texts.analysis[40], 1}));
  EXPECT_EQ(xs[4], (TaskInstance{Task::t3, f.texts.stem[0], f.texts.analysis[40], 0}));
}

TEST(Instances, SimilarPairNegativeSharesAConcept) {
  const auto& f = Fixture::get();
  const auto& c = f.data.corpus;
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t a = rng.below(c.size());
    const std::size_t b = (a + 1) % c.size();
    LabeledPair p{c[a].id, c[b].id, PairLabel::similar, {}, {}};
    InstanceLog log;
    const auto xs = build_task_instances(p, c, f.texts, rng, &log);
    ASSERT_EQ(xs.size(), 5u);
    EXPECT_EQ(log.t3_fallback_uniform, 0u);
    const auto& neg = xs[4];
    EXPECT_EQ(neg.task, Task::t3);
    EXPECT_EQ(neg.label, 0);
    EXPECT_EQ(neg.left, f.texts.stem[a]);
    std::set<std::size_t> sources;
    for (std::size_t j = 0; j < c.size(); ++j)
      if (f.texts.analysis[j] == neg.right) sources.insert(j);
    bool ok = false;
    const auto& kc = c[a].metadata.knowledge_concepts;
    for (auto j : sources) {
      if (j == a || j == b) continue;
      for (int k : c[j].metadata.knowledge_concepts) ok |= std::count(kc.begin(), kc.end(), k) > 0;
    }
    EXPECT_TRUE(ok) << "trial " << trial;
  }
}

TEST(Instances, FallsBackToUniformWithoutConceptSharing) {
  const auto& f = Fixture::get();
  std::vector<Exercise> ex{f.data.corpus[0], f.data.corpus[1], f.data.corpus[2]};
  ex[0].metadata.knowledge_concepts = {0};
  ex[1].metadata.knowledge_concepts = {1};
  ex[2].metadata.knowledge_concepts = {2};
  const Corpus c(f.data.corpus.schema(), ex);
  const RankTexts t{{f.texts.stem[0], f.texts.stem[1], f.texts.stem[2]},
                    {{1, 3}, {1, 4}, {1, 5}}};
  InstanceLog log;
  Rng rng(3);
  const auto xs = build_task_instances(LabeledPair{ex[0].id, ex[1].id, PairLabel::similar, {}, {}}, c, t, rng, &log);
  ASSERT_EQ(xs.size(), 5u);
  EXPECT_EQ(log.t3_fallback_uniform, 1u);
  EXPECT_EQ(xs[4].right, t.analysis[2]);
}

TEST(Instances, MissingAnalysisYieldsOnlyT1) {
  const auto& f = Fixture::get();
  RankTexts t = f.texts;
  t.analysis[7].clear();
  InstanceLog log;
  Rng rng(4);
  const auto& c = f.data.corpus;
  const auto xs = build_task_instances(LabeledPair{c[7].id, c[8].id, PairLabel::similar, {}, {}}, c, t, rng, &log);
  ASSERT_EQ(xs.size(), 1u);
  EXPECT_EQ(xs[0].task, Task::t1);
  EXPECT_EQ(log.skipped_no_analysis, 1u);
}

TEST(Instances, DeterministicForSeed) {
  const auto& f = Fixture::get();
  const auto a = build_task_instances(f.data.pairs, f.data.corpus, f.texts, 9);
  const auto b = build_task_instances(f.data.pairs, f.data.corpus, f.texts, 9);
  EXPECT_EQ(a, b);
  EXPECT_GE(a.size(), 4 * f.data.pairs.size());
}

TEST(TrainRanker, ZeroEpochsKeepsInit) {
  const auto& f = Fixture::get();
  RankConfig cfg;
  cfg.epochs = 0;
  EXPECT_TRUE(train_ranker(f.data.pairs, f.data.corpus, f.texts, f.init, cfg).params == f.init);
}

TEST(TrainRanker, LossDecreasesAndStaysFinite) {
  const auto& f = Fixture::get();
  const auto& h = f.trained.history;
  ASSERT_EQ(h.size(), 3u);
  EXPECT_LT(h.back().total, h.front().total);
  EXPECT_TRUE(f.trained.params.all_finite());
  for (const auto& e : h) EXPECT_NEAR(e.alpha[0] + e.alpha[1] + e.alpha[2], 1.0, 1e-9);
}

TEST(TrainRanker, DeterministicForSeed) {
  const auto& f = Fixture::get();
  EXPECT_TRUE(train_ranker(f.data.pairs, f.data.corpus, f.texts, f.init, f.cfg).params == f.trained.params);
}

TEST(TrainRanker, SingleTaskAblation) {
  const auto& f = Fixture::get();
  RankConfig cfg;
  cfg.epochs = 1;
  cfg.tasks = {true, false, false};
  cfg.moe = false;
  const auto r = train_ranker(f.data.pairs, f.data.corpus, f.texts, f.init, cfg);
  EXPECT_EQ(r.history[0].alpha[0], 1.0);
  EXPECT_EQ(r.history[0].task_loss[1], 0.0);
  EXPECT_EQ(r.history[0].task_loss[2], 0.0);
}

TEST(TrainRanker, InvalidConfigRejected) {
  const auto& f = Fixture::get();
  RankConfig cfg;
  cfg.lr = 0.0;
  EXPECT_THROW(train_ranker(f.data.pairs, f.data.corpus, f.texts, f.init, cfg), ConfigError);
  cfg = {};
  cfg.batch = 0;
  EXPECT_THROW(train_ranker(f.data.pairs, f.data.corpus, f.texts, f.init, cfg), ConfigError);
}

TEST(ScorePair, RangeAndDeterminism) {
  const auto& f = Fixture::get();
  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    const auto a = rng.below(f.texts.stem.size()), b = rng.below(f.texts.stem.size());
    const double s = score_pair(f.texts.stem[a], f.texts.stem[b], f.trained.params);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_EQ(s, score_pair(f.texts.stem[a], f.texts.stem[b], f.trained.params));
  }
}

TEST(ScorePair, SelfAboveOtherTemplate) {
  const auto& f = Fixture::get();
  double self = 0.0, other = 0.0;
  const auto n = f.data.corpus.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = (i + n / 2) % n;  // lands in a different template
    ASSERT_NE(f.data.group[i], f.data.group[j]);
    self += score_pair(f.texts.stem[i], f.texts.stem[i], f.trained.params);
    other += score_pair(f.texts.stem[i], f.texts.stem[j], f.trained.params);
  }
  EXPECT_GT(self, other);
}

TEST(ScorePair, UntrainedRaises) {
  EXPECT_THROW(score_pair(std::vector<int>{3}, std::vector<int>{4}, RankerParams{}), ConfigError);
}

TEST(Rank, PermutationSortedWithIdTieBreak) {
  const auto& f = Fixture::get();
  const auto& c = f.data.corpus;
  CandidateList cands;
  for (std::size_t i = 20; i < 50; ++i) cands.push_back({i, c[i].id, 0.0, Source::embed});
  const auto out = rank(f.texts.stem[0], cands, f.texts, f.trained.params);
  ASSERT_EQ(out.size(), cands.size());
  std::multiset<std::string> in_ids, out_ids;
  for (const auto& x : cands) in_ids.insert(x.id);
  for (const auto& x : out) out_ids.insert(x.id);
  EXPECT_EQ(in_ids, out_ids);
  for (std::size_t k = 1; k < out.size(); ++k) {
    EXPECT_GE(out[k - 1].score, out[k].score);
    if (out[k - 1].score == out[k].score) {
      EXPECT_LT(out[k - 1].id, out[k].id);
    }
  }
}

TEST(Rank, EqualScoresOrderedById) {
  const auto& f = Fixture::get();
  RankTexts t;
  for (std::size_t i = 0; i < 4; ++i) {
    t.stem.push_back(f.texts.stem[1]);
    t.analysis.push_back(f.texts.analysis[1]);
  }
  CandidateList cands;
  std::size_t k = 0;
  for (const char* id : {"d", "b", "c", "a"}) cands.push_back({k++, id, 0.0, Source::exact});
  const auto out = rank(f.texts.stem[0], cands, t, f.trained.params);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0].id, "a");
  EXPECT_EQ(out[1].id, "b");
  EXPECT_EQ(out[2].id, "c");
  EXPECT_EQ(out[3].id, "d");
}

TEST(RankerParams, ArchiveRoundTrip) {
  const auto& f = Fixture::get();
  TempDir dir;
  f.trained.params.save(dir.file("r.bin"));
  const auto back = RankerParams::load(dir.file("r.bin"));
  EXPECT_TRUE(back == f.trained.params);
  EXPECT_EQ(score_pair(f.texts.stem[0], f.texts.stem[3], back),
            score_pair(f.texts.stem[0], f.texts.stem[3], f.trained.params));
  EXPECT_THROW(RankerParams{}.save(dir.file("x.bin")), ConfigError);
}
