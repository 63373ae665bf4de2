#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "fse/corpus.hpp"
#include "test_util.hpp"

using namespace fse;
using fse::testing::TempDir;

namespace {

std::string record(const std::string& id, const std::string& stem = "solve $x+1=2$") {
  return R"({"id":")" + id + R"(","stem":")" + stem +
         R"(","options":[],"answer":"1","analysis":"move terms","image_features":[],)"
         R"("exercise_type":"fill","difficulty":2,"knowledge_concepts":[0,3],)"
         R"("learning_stage":{"grade":8,"semester":1}})";
}

}  // namespace

TEST(Corpus, LoadsValidRecords) {
  const auto c = parse_corpus_jsonl(record("e1") + "\n" + record("e2") + "\n" + record("e3") + "\n");
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(c[1].id, "e2");
  EXPECT_EQ(c.schema().n_concepts, 4);
  EXPECT_EQ(c.index_of("e3"), 2u);
}

TEST(Corpus, EmptyFileIsEmptyCorpus) {
  EXPECT_EQ(parse_corpus_jsonl("").size(), 0u);
  EXPECT_EQ(parse_corpus_jsonl("\n\n").size(), 0u);
}

TEST(Corpus, DuplicateIdCitesLaterLine) {
  const std::string text =
      record("a") + "\n" + record("e1") + "\n" + record("b") + "\n" + record("c") + "\n" + record("e1") + "\n";
  try {
    parse_corpus_jsonl(text);
    FAIL() << "expected a ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
    EXPECT_NE(std::string(e.what()).find("e1"), std::string::npos);
  }
}

TEST(Corpus, MalformedLineReportsLineNumber) {
  try {
    parse_corpus_jsonl(record("a") + "\n{not json\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Corpus, SchemaViolationsRejected) {
  EXPECT_THROW(parse_corpus_jsonl(record("a", "")), ParseError);
  std::string bad = record("a");
  bad.replace(bad.find("\"difficulty\":2"), 14, "\"difficulty\":9");
  EXPECT_THROW(parse_corpus_jsonl(bad), ParseError);
  std::string no_concepts = record("a");
  no_concepts.replace(no_concepts.find("[0,3]"), 5, "[]");
  EXPECT_THROW(parse_corpus_jsonl(no_concepts), ParseError);
}

TEST(Corpus, UnknownIdNotFound) {
  const auto c = parse_corpus_jsonl(record("a"));
  EXPECT_THROW(c.index_of("zzz"), NotFoundError);
  EXPECT_FALSE(c.find("zzz").has_value());
}

TEST(Corpus, JsonlRoundTrip) {
  TempDir dir;
  const auto data = generate_synthetic({.n_templates = 4, .per_template = 5, .n_pairs = 20});
  save_corpus_jsonl(data.corpus, dir.file("c.jsonl"));
  const auto back = load_corpus(dir.file("c.jsonl"), data.corpus.schema());
  EXPECT_EQ(back, data.corpus);
}

TEST(Snapshot, RoundTripIsIdentity) {
  TempDir dir;
  const auto data = generate_synthetic({.n_templates = 10, .per_template = 20, .noise_rate = 0.0, .n_pairs = 100});
  ASSERT_EQ(data.corpus.size(), 200u);
  save_snapshot(data.corpus, dir.file("c.snap"));
  EXPECT_EQ(load_snapshot(dir.file("c.snap")), data.corpus);
}

TEST(Snapshot, WrongMagicIsVersionError) {
  const auto data = generate_synthetic({.n_templates = 2, .per_template = 3, .n_pairs = 4});
  auto bytes = serialize_snapshot(data.corpus);
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_snapshot(bytes), VersionError);
}

TEST(Snapshot, WrongVersionIsVersionError) {
  const auto data = generate_synthetic({.n_templates = 2, .per_template = 3, .n_pairs = 4});
  auto bytes = serialize_snapshot(data.corpus);
  bytes[8] = 7;
  EXPECT_THROW(deserialize_snapshot(bytes), VersionError);
}

TEST(Snapshot, TruncationIsCorruption) {
  TempDir dir;
  const auto data = generate_synthetic({.n_templates = 3, .per_template = 4, .n_pairs = 10});
  save_snapshot(data.corpus, dir.file("c.snap"));
  const auto size = std::filesystem::file_size(dir.file("c.snap"));
  for (auto cut : {size - 1, size - 9, size / 2, std::uintmax_t{20}}) {
    std::filesystem::resize_file(dir.file("c.snap"), cut);
    EXPECT_THROW(load_snapshot(dir.file("c.snap")), CorruptionError) << "cut at " << cut;
    save_snapshot(data.corpus, dir.file("c.snap"));
  }
}

TEST(Snapshot, FlippedByteIsCorruption) {
  const auto data = generate_synthetic({.n_templates = 3, .per_template = 4, .n_pairs = 10});
  auto bytes = serialize_snapshot(data.corpus);
  bytes[bytes.size() / 2] ^= 0x20;
  EXPECT_THROW(deserialize_snapshot(bytes), Error);
}

TEST(Pairs, MajorityVote) {
  using L = PairLabel;
  EXPECT_EQ(majority_label({L::similar, L::similar, L::dissimilar}), L::similar);
  EXPECT_EQ(majority_label({L::dissimilar}), L::dissimilar);
  EXPECT_THROW(majority_label({L::similar, L::dissimilar}), ValidationError);
  EXPECT_THROW(majority_label({}), ValidationError);
}

TEST(Pairs, JsonRoundTrip) {
  TempDir dir;
  const auto data = generate_synthetic({.n_templates = 4, .per_template = 10, .n_pairs = 60});
  save_pairs(data.pairs, dir.file("p.jsonl"));
  EXPECT_EQ(load_pairs(dir.file("p.jsonl")), data.pairs);
  EXPECT_NO_THROW(validate_pairs(data.corpus, data.pairs));
}

TEST(Pairs, ValidationCatchesBadPairs) {
  const auto data = generate_synthetic({.n_templates = 2, .per_template = 4, .n_pairs = 4});
  auto p = data.pairs[0];
  p.b_id = p.a_id;
  EXPECT_THROW(validate_pairs(data.corpus, {p}), ValidationError);
  p = data.pairs[0];
  p.b_id = "missing";
  EXPECT_THROW(validate_pairs(data.corpus, {p}), ValidationError);
}

TEST(Pairs, SplitBySeedKeepsSeedsTogether) {
  const auto data = generate_synthetic({});
  const auto split = split_by_seed(data.pairs, 0.2, 3);
  EXPECT_EQ(split.train.size() + split.test.size(), data.pairs.size());
  std::set<std::string> train_seeds;
  for (const auto& p : split.train) train_seeds.insert(p.a_id);
  for (const auto& p : split.test) EXPECT_FALSE(train_seeds.count(p.a_id));
  EXPECT_GT(split.test.size(), 0u);
}

TEST(Synthetic, ZeroNoiseLabelsMatchTemplates) {
  const auto data = generate_synthetic({.n_templates = 10, .per_template = 20, .noise_rate = 0.0});
  EXPECT_EQ(data.corpus.size(), 200u);
  EXPECT_TRUE(data.flipped.empty());
  std::size_t similar = 0;
  for (const auto& p : data.pairs) {
    EXPECT_EQ(p.label == PairLabel::similar, data.similar(p.a_id, p.b_id));
    similar += p.y();
  }
  EXPECT_GT(similar, 0u);
  EXPECT_LT(similar, data.pairs.size());
}

TEST(Synthetic, NoiseFlipsExactCountAndLogsThem) {
  SyntheticSpec spec;
  spec.noise_rate = 0.15;
  spec.n_pairs = 1000;
  const auto data = generate_synthetic(spec);
  ASSERT_EQ(data.pairs.size(), 1000u);
  EXPECT_EQ(data.flipped.size(), 150u);
  std::set<std::size_t> flipped(data.flipped.begin(), data.flipped.end());
  std::size_t disagreements = 0;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const bool truth = data.similar(data.pairs[i].a_id, data.pairs[i].b_id);
    const bool wrong = (data.pairs[i].label == PairLabel::similar) != truth;
    EXPECT_EQ(wrong, flipped.count(i) == 1) << i;
    disagreements += wrong;
  }
  EXPECT_EQ(disagreements, 150u);
}

TEST(Synthetic, SameSeedByteIdentical) {
  const auto a = generate_synthetic({});
  const auto b = generate_synthetic({});
  EXPECT_EQ(serialize_snapshot(a.corpus), serialize_snapshot(b.corpus));
  EXPECT_EQ(a.pairs, b.pairs);
  SyntheticSpec other;
  other.seed = 8;
  EXPECT_NE(serialize_snapshot(generate_synthetic(other).corpus), serialize_snapshot(a.corpus));
}

TEST(Synthetic, InvalidSpecRejected) {
  SyntheticSpec s;
  s.noise_rate = 0.5;
  EXPECT_THROW(generate_synthetic(s), ValidationError);
  s = {};
  s.per_template = 1;
  EXPECT_THROW(generate_synthetic(s), ValidationError);
}

TEST(Synthetic, VotesAgreeWithLabels) {
  const auto data = generate_synthetic({});
  for (const auto& p : data.pairs) {
    ASSERT_EQ(p.votes.size(), 3u);
    EXPECT_EQ(majority_label(p.votes), p.label);
  }
}

TEST(Synthetic, PerturbationsTouchOnlyTheStem) {
  const auto data = generate_synthetic({.n_templates = 2, .per_template = 3, .n_pairs = 4});
  Rng rng(1);
  const auto& e = data.corpus[0];
  const auto dup = make_distractor_copy(e, rng, "dup");
  EXPECT_NE(dup.stem, e.stem);
  EXPECT_NE(dup.stem.find(" in "), std::string::npos);
  EXPECT_EQ(dup.analysis, e.analysis);
  const auto deg = make_degree_change(e, "deg");
  EXPECT_NE(deg.stem, e.stem);
  EXPECT_EQ(make_degree_change(deg, "back").stem, e.stem);
}
