#include <gtest/gtest.h>

#include <numeric>

#include "fse/textnorm.hpp"
#include "test_util.hpp"

using namespace fse;

TEST(CleanText, StripsTags) {
  EXPECT_EQ(clean_text("<b>solve</b> x"), "solve x");
  EXPECT_EQ(clean_text(""), "");
  EXPECT_EQ(clean_text("<p style=\"color:red\">a</p><br/>b"), "a b");
  EXPECT_EQ(clean_text("<style>p { color: red }</style>find x"), "find x");
  EXPECT_EQ(clean_text("a <!-- note --> b"), "a b");
}

TEST(CleanText, KeepsComparisonsInsideFormulas) {
  EXPECT_EQ(clean_text("if $a<b$ and <i>c</i>"), "if $a<b$ and c");
  EXPECT_EQ(clean_text("x < y"), "x < y");
}

TEST(CleanText, RemovesStopWords) {
  EXPECT_EQ(clean_text("find the root of The equation", {"the", "of"}), "find root equation");
}

TEST(CleanText, CollapsesWhitespace) { EXPECT_EQ(clean_text("  a \n\t b  "), "a b"); }

TEST(CleanText, NeverLonger) {
  Rng rng(5);
  const std::string alphabet = "ab <>/$ \t\nx=p!-";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const auto len = rng.below(40);
    for (std::size_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
    EXPECT_LE(clean_text(s).size(), s.size()) << s;
    EXPECT_LE(clean_text(s, {"a"}).size(), s.size()) << s;
  }
}

TEST(Formula, Canonical) {
  EXPECT_EQ(normalize_formula("\\frac{x}{2}").canonical, "( x / 2 )");
  EXPECT_EQ(normalize_formula("x-2m=0").canonical, "( ( x - ( 2 * m ) ) = 0 )");
  EXPECT_EQ(normalize_formula("x-2m=0").canonical, normalize_formula("x - 2m = 0").canonical);
  EXPECT_NE(normalize_formula("x^2-2m=0").canonical, normalize_formula("x-2m=0").canonical);
  EXPECT_EQ(normalize_formula("2^3^2").canonical, "( 2 ^ ( 3 ^ 2 ) )");
  EXPECT_EQ(normalize_formula("\\sqrt{x+1}").canonical, "sqrt ( ( x + 1 ) )");
  EXPECT_EQ(normalize_formula("-x").canonical, "( - x )");
  EXPECT_EQ(normalize_formula("a \\cdot b \\le 3").canonical, "( ( a * b ) <= 3 )");
  EXPECT_EQ(normalize_formula("sin x + cos(y)").canonical, "( sin ( x ) + cos ( y ) )");
  EXPECT_EQ(normalize_formula("1.5x").canonical, "( 1.5 * x )");
  EXPECT_FALSE(normalize_formula("x+1").fallback);
}

TEST(Formula, Precedence) {
  EXPECT_EQ(normalize_formula("a+b*c^d").canonical, "( a + ( b * ( c ^ d ) ) )");
  EXPECT_EQ(normalize_formula("a-b-c").canonical, "( ( a - b ) - c )");
  EXPECT_EQ(normalize_formula("(a+b)c").canonical, "( ( a + b ) * c )");
}

TEST(Formula, FallbackOnUnparseable) {
  const auto r = normalize_formula("x+)");
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.canonical, "? x + )");
  EXPECT_TRUE(normalize_formula("").fallback);
  EXPECT_TRUE(normalize_formula("\\unknown{x}").fallback);
}

namespace {

// Random formula text over the grammar, with variable spacing and brace usage.
std::string random_formula(Rng& rng, int depth) {
  auto sp = [&] { return rng.bernoulli(0.3) ? std::string(" ") : std::string(); };
  if (depth == 0 || rng.bernoulli(0.3)) {
    switch (rng.below(3)) {
      case 0: return std::to_string(rng.below(100));
      case 1: return std::string(1, "xymnab"[rng.below(6)]);
      default: return "\\pi";
    }
  }
  const auto l = random_formula(rng, depth - 1);
  const auto r = random_formula(rng, depth - 1);
  switch (rng.below(7)) {
    case 0: return l + sp() + "+" + sp() + r;
    case 1: return "(" + l + sp() + "-" + sp() + r + ")";
    case 2: return "{" + l + "}" + sp() + "*" + sp() + r;
    case 3: return "\\frac{" + l + "}{" + r + "}";
    case 4: return "(" + l + ")^{" + r + "}";
    case 5: return "\\sqrt{" + l + "}";
    default: return "-" + sp() + "(" + l + ")" + sp() + "=" + r;
  }
}

}  // namespace

TEST(Formula, SerializationReparsesToSameTree) {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto src = random_formula(rng, 4);
    const auto ast = parse_formula(src);
    ASSERT_TRUE(ast.has_value()) << src;
    const auto again = parse_formula(serialize(*ast));
    ASSERT_TRUE(again.has_value()) << serialize(*ast);
    EXPECT_EQ(*again, *ast) << src;
  }
}

TEST(Formula, NormalizationIsIdempotent) {
  Rng rng(12);
  std::vector<std::string> inputs = {"", "?", "x+)", "\\bad", "a  b", "\xE2\x88\x92x", "x \xC3\x97 2", "$", "((("};
  for (int i = 0; i < 300; ++i) inputs.push_back(random_formula(rng, 3));
  const std::string junk = "x+-*/^=()<>{}\\?# 1a";
  for (int i = 0; i < 300; ++i) {
    std::string s;
    for (std::size_t k = rng.below(12); k > 0; --k) s += junk[rng.below(junk.size())];
    inputs.push_back(s);
  }
  for (const auto& s : inputs) {
    const auto once = normalize_formula(s).canonical;
    EXPECT_EQ(normalize_formula(once).canonical, once) << "input: " << s;
  }
}

TEST(Tokenize, SplitsWordsAndSymbols) {
  EXPECT_EQ(split_tokens("Solve, x; 3.5 + y!"), (std::vector<std::string>{"solve", "x", "3.5", "+", "y"}));
  EXPECT_EQ(split_tokens("( x ^ 2 )"), (std::vector<std::string>{"(", "x", "^", "2", ")"}));
}

TEST(Tokenize, KnownAndUnknown) {
  const auto vocab = Vocab::build({{"solve", "x"}});
  const auto seq = tokenize("solve x", vocab);
  ASSERT_EQ(seq.size(), 2u);
  for (int id : seq.ids) EXPECT_GE(id, Vocab::kReserved);
  EXPECT_EQ(tokenize("integrate", vocab).ids, std::vector<int>{Vocab::kUnk});
  EXPECT_EQ(detokenize(seq, vocab), (std::vector<std::string>{"solve", "x"}));
}

TEST(Tokenize, NormalizesFormulasFirst) {
  const auto vocab = Vocab::build({split_tokens(normalize_text("find $x-2m=0$"))});
  EXPECT_EQ(tokenize("find $x - 2m = 0$", vocab), tokenize("find $x-2m=0$", vocab));
  EXPECT_EQ(normalize_text("find <b>$\\frac{x}{2}$</b>"), "find ( x / 2 )");
}

TEST(Tokenize, NonEmptyForNonEmptyInput) {
  const Vocab vocab;
  EXPECT_FALSE(tokenize("anything", vocab).empty());
  EXPECT_TRUE(tokenize("", vocab).empty());
}

TEST(Vocab, OrderedByFrequencyThenToken) {
  const auto v = Vocab::build({{"b", "a", "c"}, {"c", "b"}, {"c"}});
  EXPECT_EQ(v.token(3), "c");
  EXPECT_EQ(v.token(4), "b");
  EXPECT_EQ(v.token(5), "a");
  EXPECT_EQ(v.id("[PAD]"), Vocab::kPad);
  EXPECT_EQ(v.id("[SEP]"), Vocab::kSep);
}

TEST(Vocab, FileRoundTrip) {
  fse::testing::TempDir dir;
  const auto v = Vocab::build({{"x", "y", "+", "3.5"}});
  v.save(dir.file("vocab.txt"));
  const auto back = Vocab::load(dir.file("vocab.txt"));
  EXPECT_EQ(back, v);
  EXPECT_EQ(read_file(dir.file("vocab.txt")).substr(0, 2), v.token(3) + "\n");
  EXPECT_THROW(Vocab::deserialize("a\na\n"), ParseError);
}

TEST(Metadata, ConceptMultiHot) {
  MetadataSchema schema;
  schema.n_concepts = 10;
  const auto enc = encode_metadata({"fill", 2, {3, 7}}, schema);
  EXPECT_DOUBLE_EQ(enc.concepts[3], 0.5);
  EXPECT_DOUBLE_EQ(enc.concepts[7], 0.5);
  EXPECT_DOUBLE_EQ(enc.concepts.sum(), 1.0);
  EXPECT_EQ((enc.concepts.array() != 0.0).count(), 2);

  const auto one = encode_metadata({"fill", 2, {4}}, schema);
  EXPECT_DOUBLE_EQ(one.concepts[4], 1.0);
  EXPECT_DOUBLE_EQ(one.concepts.sum(), 1.0);
}

TEST(Metadata, TypeAndDifficultyOneHot) {
  MetadataSchema schema;
  schema.n_concepts = 3;
  const auto enc = encode_metadata({"proof", 2, {0}}, schema);
  EXPECT_EQ(enc.type.size(), 4);
  EXPECT_DOUBLE_EQ(enc.type[2], 1.0);
  EXPECT_DOUBLE_EQ(enc.type.sum(), 1.0);
  // difficulty levels are 1-based; the one-hot is 0-based
  EXPECT_EQ(enc.difficulty.size(), 5);
  EXPECT_DOUBLE_EQ(enc.difficulty[1], 1.0);
  EXPECT_DOUBLE_EQ(enc.difficulty.sum(), 1.0);
}

TEST(Metadata, UnknownConceptRejected) {
  MetadataSchema schema;
  schema.n_concepts = 3;
  EXPECT_THROW(encode_metadata({"fill", 1, {5}}, schema), ValidationError);
  EXPECT_THROW(encode_metadata({"essay", 1, {0}}, schema), ValidationError);
}

TEST(Metadata, MultiHotSumsToOne) {
  Rng rng(3);
  MetadataSchema schema;
  schema.n_concepts = 40;
  for (int i = 0; i < 500; ++i) {
    const auto k = 1 + rng.below(12);
    std::vector<int> concepts;
    for (auto c : rng.sample(40, k)) concepts.push_back(static_cast<int>(c));
    const auto enc = encode_metadata({"calc", 1, concepts}, schema);
    EXPECT_NEAR(enc.concepts.sum(), 1.0, 1e-12);
  }
}
