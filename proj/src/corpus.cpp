#include "fse/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fse/snapshot.hpp"

namespace fse {

using nlohmann::json;

int MetadataSchema::type_index(const std::string& type) const {
  auto it = std::find(types.begin(), types.end(), type);
  if (it == types.end()) throw ValidationError("unknown exercise_type '" + type + "'");
  return static_cast<int>(it - types.begin());
}

json to_json(const Exercise& e) {
  json j;
  j["id"] = e.id;
  j["stem"] = e.stem;
  j["options"] = e.options;
  j["answer"] = e.answer;
  j["analysis"] = e.analysis;
  j["image_features"] = e.image_features;
  j["exercise_type"] = e.metadata.exercise_type;
  j["difficulty"] = e.metadata.difficulty;
  j["knowledge_concepts"] = e.metadata.knowledge_concepts;
  j["learning_stage"] = {{"grade", e.learning_stage.grade}, {"semester", e.learning_stage.semester}};
  return j;
}

namespace {

template <typename T>
T field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("field '") + name + "' has the wrong type");
  }
}

template <typename T>
T optional_field(const json& j, const char* name, T fallback) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("field '") + name + "' has the wrong type");
  }
}

}  // namespace

Exercise exercise_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  Exercise e;
  e.id = field<std::string>(j, "id");
  e.stem = field<std::string>(j, "stem");
  e.options = optional_field<std::vector<std::string>>(j, "options", {});
  e.answer = optional_field<std::string>(j, "answer", "");
  e.analysis = optional_field<std::string>(j, "analysis", "");
  e.image_features = optional_field<std::vector<std::vector<double>>>(j, "image_features", {});
  e.metadata.exercise_type = field<std::string>(j, "exercise_type");
  e.metadata.difficulty = field<int>(j, "difficulty");
  e.metadata.knowledge_concepts = field<std::vector<int>>(j, "knowledge_concepts");
  const json& stage = j.contains("learning_stage") ? j.at("learning_stage") : json();
  if (!stage.is_object()) throw ValidationError("missing field 'learning_stage'");
  e.learning_stage.grade = field<int>(stage, "grade");
  e.learning_stage.semester = field<int>(stage, "semester");
  return e;
}

void validate_exercise(const Exercise& e, const MetadataSchema& schema) {
  if (e.id.empty()) throw ValidationError("empty exercise id");
  if (e.stem.empty()) throw ValidationError("exercise '" + e.id + "' has an empty stem");
  schema.type_index(e.metadata.exercise_type);
  if (e.metadata.difficulty < 1 || e.metadata.difficulty > schema.difficulty_levels) {
    throw ValidationError("exercise '" + e.id + "' difficulty " + std::to_string(e.metadata.difficulty) +
                          " outside [1, " + std::to_string(schema.difficulty_levels) + "]");
  }
  if (e.metadata.knowledge_concepts.empty()) {
    throw ValidationError("exercise '" + e.id + "' has no knowledge concepts");
  }
  std::set<int> seen;
  for (int c : e.metadata.knowledge_concepts) {
    if (c < 0 || c >= schema.n_concepts) {
      throw ValidationError("exercise '" + e.id + "' concept " + std::to_string(c) + " outside the dictionary");
    }
    if (!seen.insert(c).second) throw ValidationError("exercise '" + e.id + "' repeats a concept");
  }
  for (const auto& f : e.image_features) {
    if (static_cast<int>(f.size()) != schema.d_img) {
      throw ValidationError("exercise '" + e.id + "' image feature dimension " + std::to_string(f.size()) +
                            " != " + std::to_string(schema.d_img));
    }
  }
}

Corpus::Corpus(MetadataSchema schema, std::vector<Exercise> exercises)
    : schema_(std::move(schema)), exercises_(std::move(exercises)) {
  by_id_.reserve(exercises_.size());
  for (std::size_t i = 0; i < exercises_.size(); ++i) {
    validate_exercise(exercises_[i], schema_);
    if (!by_id_.emplace(exercises_[i].id, i).second) {
      throw ValidationError("duplicate exercise id '" + exercises_[i].id + "'");
    }
  }
}

std::optional<std::size_t> Corpus::find(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::size_t Corpus::index_of(const std::string& id) const {
  auto i = find(id);
  if (!i) throw NotFoundError("exercise '" + id + "' not found");
  return *i;
}

Corpus parse_corpus_jsonl(const std::string& text, MetadataSchema schema) {
  std::vector<Exercise> out;
  std::unordered_map<std::string, std::size_t> first_line;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Exercise e;
    try {
      e = exercise_from_json(json::parse(line));
    } catch (const json::parse_error& err) {
      throw ParseError(std::string("malformed JSON: ") + err.what(), lineno);
    } catch (const ValidationError& err) {
      throw ParseError(err.what(), lineno);
    }
    if (auto [it, fresh] = first_line.emplace(e.id, lineno); !fresh) {
      throw ParseError("duplicate id '" + e.id + "' (first seen on line " + std::to_string(it->second) + ")",
                       lineno);
    }
    out.push_back(std::move(e));
  }
  if (schema.n_concepts == 0) {
    int mx = -1;
    for (const auto& e : out)
      for (int c : e.metadata.knowledge_concepts) mx = std::max(mx, c);
    schema.n_concepts = mx + 1;
  }
  if (schema.d_img == 0) {
    for (const auto& e : out) {
      if (!e.image_features.empty()) {
        schema.d_img = static_cast<int>(e.image_features.front().size());
        break;
      }
    }
    if (schema.d_img == 0) schema.d_img = 32;
  }
  // Re-validate with line numbers so schema errors cite their record.
  lineno = 0;
  std::size_t k = 0;
  std::istringstream again(text);
  while (std::getline(again, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      validate_exercise(out[k++], schema);
    } catch (const ValidationError& err) {
      throw ParseError(err.what(), lineno);
    }
  }
  return Corpus(std::move(schema), std::move(out));
}

Corpus load_corpus(const std::string& path, MetadataSchema schema) {
  return parse_corpus_jsonl(read_file(path), std::move(schema));
}

void save_corpus_jsonl(const Corpus& corpus, const std::string& path) {
  std::string out;
  for (const auto& e : corpus.exercises()) {
    out += to_json(e).dump();
    out += '\n';
  }
  write_file(path, out);
}

namespace {
json schema_json(const MetadataSchema& s) {
  return {{"types", s.types},
          {"difficulty_levels", s.difficulty_levels},
          {"n_concepts", s.n_concepts},
          {"d_img", s.d_img}};
}
MetadataSchema schema_from(const json& j) {
  MetadataSchema s;
  s.types = j.at("types").get<std::vector<std::string>>();
  s.difficulty_levels = j.at("difficulty_levels").get<int>();
  s.n_concepts = j.at("n_concepts").get<int>();
  s.d_img = j.at("d_img").get<int>();
  return s;
}
}  // namespace

std::string serialize_snapshot(const Corpus& corpus) {
  ByteWriter out;
  write_header(out, "FSECORPS", 1);
  out.str(schema_json(corpus.schema()).dump());
  out.u64(corpus.size());
  for (const auto& e : corpus.exercises()) out.str(to_json(e).dump());
  out.seal();
  return out.data();
}

Corpus deserialize_snapshot(std::string_view bytes) {
  ByteReader in(bytes);
  expect_header(in, "FSECORPS", 1);
  try {
    auto schema = schema_from(json::parse(in.str()));
    const auto n = in.u64();
    std::vector<Exercise> exercises;
    for (std::uint64_t i = 0; i < n; ++i) exercises.push_back(exercise_from_json(json::parse(in.str())));
    in.verify_seal();
    return Corpus(std::move(schema), std::move(exercises));
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("corpus snapshot record is not valid JSON: ") + e.what());
  }
}

void save_snapshot(const Corpus& corpus, const std::string& path) { write_file(path, serialize_snapshot(corpus)); }

Corpus load_snapshot(const std::string& path) { return deserialize_snapshot(read_file(path)); }

// ---------------------------------------------------------------------------

PairLabel majority_label(const std::vector<PairLabel>& votes) {
  if (votes.empty()) throw ValidationError("no votes");
  std::size_t similar = 0;
  for (auto v : votes) similar += (v == PairLabel::similar);
  const std::size_t dissimilar = votes.size() - similar;
  if (similar == dissimilar) throw ValidationError("tied annotator votes");
  return similar > dissimilar ? PairLabel::similar : PairLabel::dissimilar;
}

void validate_pairs(const Corpus& corpus, const std::vector<LabeledPair>& pairs) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const std::string where = "pair " + std::to_string(i) + " (" + p.a_id + ", " + p.b_id + ")";
    if (p.a_id == p.b_id) throw ValidationError(where + ": a_id equals b_id");
    if (!corpus.find(p.a_id) || !corpus.find(p.b_id)) throw ValidationError(where + ": unknown exercise id");
    if (!p.votes.empty() && majority_label(p.votes) != p.label) {
      throw ValidationError(where + ": label disagrees with the vote majority");
    }
  }
}

namespace {
const char* label_name(PairLabel l) { return l == PairLabel::similar ? "similar" : "dissimilar"; }
PairLabel parse_label(const json& j) {
  if (j.is_number_integer()) return j.get<int>() != 0 ? PairLabel::similar : PairLabel::dissimilar;
  const auto s = j.get<std::string>();
  if (s == "similar") return PairLabel::similar;
  if (s == "dissimilar") return PairLabel::dissimilar;
  throw ValidationError("unknown pair label '" + s + "'");
}
}  // namespace

json to_json(const LabeledPair& p) {
  json j{{"a_id", p.a_id}, {"b_id", p.b_id}, {"label", label_name(p.label)}};
  if (p.variant) j["variant"] = *p.variant == VariantFlag::variant ? "variant" : "plain-similar";
  json votes = json::array();
  for (auto v : p.votes) votes.push_back(label_name(v));
  j["votes"] = votes;
  return j;
}

LabeledPair pair_from_json(const json& j) {
  LabeledPair p;
  p.a_id = field<std::string>(j, "a_id");
  p.b_id = field<std::string>(j, "b_id");
  if (!j.contains("label")) throw ValidationError("missing field 'label'");
  p.label = parse_label(j.at("label"));
  if (j.contains("variant") && !j.at("variant").is_null()) {
    const auto v = j.at("variant").get<std::string>();
    if (v == "variant") p.variant = VariantFlag::variant;
    else if (v == "plain-similar") p.variant = VariantFlag::plain_similar;
    else throw ValidationError("unknown variant flag '" + v + "'");
  }
  if (j.contains("votes"))
    for (const auto& v : j.at("votes")) p.votes.push_back(parse_label(v));
  return p;
}

std::vector<LabeledPair> load_pairs(const std::string& path) {
  std::vector<LabeledPair> out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(pair_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed pair: ") + e.what(), lineno);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

void save_pairs(const std::vector<LabeledPair>& pairs, const std::string& path) {
  std::string out;
  for (const auto& p : pairs) {
    out += to_json(p).dump();
    out += '\n';
  }
  write_file(path, out);
}

PairSplit split_by_seed(const std::vector<LabeledPair>& pairs, double test_fraction, std::uint64_t seed) {
  std::vector<std::string> seeds;
  std::set<std::string> seen;
  for (const auto& p : pairs)
    if (seen.insert(p.a_id).second) seeds.push_back(p.a_id);
  Rng rng(seed);
  rng.shuffle(seeds);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(seeds.size())));
  std::set<std::string> test_seeds(seeds.begin(), seeds.begin() + static_cast<std::ptrdiff_t>(n_test));
  PairSplit split;
  for (const auto& p : pairs) (test_seeds.count(p.a_id) ? split.test : split.train).push_back(p);
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic generation

void SyntheticSpec::validate() const {
  if (n_templates < 1) throw ValidationError("n_templates must be >= 1");
  if (per_template < 2) throw ValidationError("per_template must be >= 2");
  if (!(noise_rate >= 0.0 && noise_rate < 0.5)) throw ValidationError("noise_rate must be in [0, 0.5)");
  if (vocab_size < 8) throw ValidationError("vocab_size must be >= 8");
  if (n_pairs < 0) throw ValidationError("n_pairs must be >= 0");
  if (candidates_per_seed < 1) throw ValidationError("candidates_per_seed must be >= 1");
  if (positive_fraction < 0.0 || positive_fraction > 1.0) throw ValidationError("positive_fraction must be in [0, 1]");
  if (variant_rate < 0.0 || variant_rate > 1.0) throw ValidationError("variant_rate must be in [0, 1]");
  if (d_img < 1) throw ValidationError("d_img must be >= 1");
  // pseudo-word ids must stay below 4096 to remain distinct
  if (vocab_size + 2 * n_templates * 16 >= 4096) throw ValidationError("vocab_size/n_templates too large");
}

bool SyntheticData::similar(const std::string& a, const std::string& b) const {
  return group[corpus.index_of(a)] == group[corpus.index_of(b)];
}

std::vector<std::string> SyntheticData::mates(std::size_t i) const {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < corpus.size(); ++j)
    if (j != i && group[j] == group[i]) out.push_back(corpus[j].id);
  return out;
}

namespace {

// Pronounceable pseudo-words: 3 syllables from a 16-entry table, with an odd
// multiplier so distinct ids below 4096 give distinct words.
std::string pseudo_word(int id) {
  static const char* syl[16] = {"ka", "lo", "mi", "tu", "re", "sa", "no", "pi",
                                "ve", "du", "ba", "ze", "fo", "gi", "hu", "ya"};
  const unsigned x = (static_cast<unsigned>(id) * 2731u) % 4096u;
  return std::string(syl[x & 15]) + syl[(x >> 4) & 15] + syl[(x >> 8) & 15];
}

const char* kMonths[] = {"january", "march", "may", "june", "august", "october"};

struct FormulaShape {
  char var;
  int kind;  // family pattern
};

// Stem formula for a template; siblings differ in degree or relation.
std::string stem_formula(const FormulaShape& f, int sibling, int a, int b, int c) {
  const std::string v(1, f.var);
  const std::string a_s = std::to_string(a), b_s = std::to_string(b), c_s = std::to_string(c);
  const std::string term = sibling == 1 ? v + "^2" : v;
  switch (f.kind) {
    case 0: return a_s + term + "+" + b_s + "=" + c_s;
    case 1: return "\\frac{" + term + "}{" + a_s + "}-" + b_s + "=" + c_s;
    case 2: return "\\sqrt{" + a_s + term + "}=" + b_s;
    default: return a_s + v + "+" + b_s + (sibling == 1 ? ">" : "<") + c_s;
  }
}

std::string analysis_formula(const FormulaShape& f, int sibling, int a, int b, int c) {
  const std::string v(1, f.var);
  const std::string a_s = std::to_string(a), b_s = std::to_string(b), c_s = std::to_string(c);
  const std::string term = sibling == 1 ? v + "^2" : v;
  switch (f.kind) {
    case 0: return term + "=\\frac{" + c_s + "-" + b_s + "}{" + a_s + "}";
    case 1: return term + "=" + a_s + "(" + c_s + "+" + b_s + ")";
    case 2: return a_s + term + "=" + b_s + "^2";
    default: return v + (sibling == 1 ? ">" : "<") + "\\frac{" + c_s + "-" + b_s + "}{" + a_s + "}";
  }
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

template <typename T>
std::vector<T> pick(const std::vector<T>& from, std::size_t k, Rng& rng) {
  std::vector<T> out;
  for (auto i : rng.sample(from.size(), std::min(k, from.size()))) out.push_back(from[i]);
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticData data;

  const int n_families = (spec.n_templates + 1) / 2;
  const int n_extra_concepts = 3;
  MetadataSchema schema;
  schema.n_concepts = n_families + n_extra_concepts;
  schema.d_img = spec.d_img;

  // Word pools: fillers use ids [0, vocab_size); template words come after.
  int next_word = spec.vocab_size;
  auto fresh_words = [&](int k) {
    std::vector<std::string> w;
    for (int i = 0; i < k; ++i) w.push_back(pseudo_word(next_word++));
    return w;
  };
  // Sibling templates share their stem vocabulary and differ only in the
  // formula (degree or relation) and in the solving method of the analysis.
  struct FamilyWords {
    std::vector<std::string> topic, stem, condition, variant_condition;
  };
  std::vector<FamilyWords> family_words(n_families);
  std::vector<FormulaShape> family_shape(n_families);
  const char vars[] = {'x', 'y', 'm', 'n', 'a', 't'};
  for (int f = 0; f < n_families; ++f) {
    family_words[f] = {fresh_words(4), fresh_words(2), fresh_words(2), fresh_words(2)};
    family_shape[f] = {vars[f % 6], f % 4};
  }

  struct Tmpl {
    TemplateInfo info;
    int sibling;
    int type;
    int difficulty;
    std::vector<int> concepts;
    std::vector<double> image_proto;
    LearningStage stage;
  };
  std::vector<Tmpl> tmpls(spec.n_templates);
  for (int t = 0; t < spec.n_templates; ++t) {
    auto& T = tmpls[t];
    T.info.family = t / 2;
    T.sibling = t % 2;
    const auto& fw = family_words[T.info.family];
    T.info.family_words = fw.topic;
    T.info.stem_words = fw.stem;
    T.info.condition_words = fw.condition;
    T.info.variant_condition_words = fw.variant_condition;
    T.info.method_words = fresh_words(6);
    T.type = static_cast<int>(rng.below(schema.types.size()));
    T.difficulty = 1 + static_cast<int>(rng.below(5));
    T.concepts = {T.info.family};
    if (rng.bernoulli(0.5)) T.concepts.push_back(n_families + static_cast<int>(rng.below(n_extra_concepts)));
    T.image_proto.resize(spec.d_img);
    for (auto& x : T.image_proto) x = rng.normal();
    T.stage = {7 + static_cast<int>(rng.below(3)), 1 + static_cast<int>(rng.below(2))};
    data.templates.push_back(T.info);
  }

  std::vector<Exercise> exercises;
  for (int t = 0; t < spec.n_templates; ++t) {
    const auto& T = tmpls[t];
    const auto& shape = family_shape[T.info.family];
    for (int j = 0; j < spec.per_template; ++j) {
      Exercise e;
      char idbuf[32];
      std::snprintf(idbuf, sizeof idbuf, "t%02d-e%03d", t, j);
      e.id = idbuf;
      const bool mutated = rng.bernoulli(spec.variant_rate);

      std::vector<std::string> words = mutated ? T.info.variant_condition_words : T.info.condition_words;
      for (auto& w : pick(T.info.family_words, 3, rng)) words.push_back(w);
      for (const auto& w : T.info.stem_words)
        if (rng.bernoulli(0.75)) words.push_back(w);
      const int n_fill = 2 + static_cast<int>(rng.below(3));
      for (int k = 0; k < n_fill; ++k) words.push_back(pseudo_word(static_cast<int>(rng.below(spec.vocab_size))));
      if (rng.bernoulli(0.2)) {
        words.push_back("in");
        words.push_back(kMonths[rng.below(6)]);
        words.push_back(std::to_string(2000 + rng.below(25)));
      }
      rng.shuffle(words);
      const int a = 2 + static_cast<int>(rng.below(8));
      const int b = 1 + static_cast<int>(rng.below(20));
      const int c = b + 1 + static_cast<int>(rng.below(40));
      e.stem = join(words) + " $" + stem_formula(shape, T.sibling, a, b, c) + "$";
      // a changed condition also adds a constraint on the unknown
      const std::string constraint =
          mutated ? " $" + std::string(1, shape.var) + " \\ge " + std::to_string(1 + rng.below(9)) + "$" : "";
      e.stem += constraint;

      const int answer = 1 + static_cast<int>(rng.below(30));
      e.answer = std::to_string(answer);
      if (schema.types[T.type] == "choice") {
        std::set<int> opts{answer};
        while (opts.size() < 4) opts.insert(1 + static_cast<int>(rng.below(30)));
        for (int o : opts) e.options.push_back(std::to_string(o));
      }

      // the analysis restates the (possibly changed) condition
      std::vector<std::string> aw = pick(T.info.method_words, 4, rng);
      for (const auto& w : mutated ? T.info.variant_condition_words : T.info.condition_words) aw.push_back(w);
      aw.push_back(T.info.family_words[rng.below(T.info.family_words.size())]);
      const int n_afill = 1 + static_cast<int>(rng.below(2));
      for (int k = 0; k < n_afill; ++k) aw.push_back(pseudo_word(static_cast<int>(rng.below(spec.vocab_size))));
      rng.shuffle(aw);
      e.analysis = join(aw) + " $" + analysis_formula(shape, T.sibling, a, b, c) + "$" + constraint;

      if (rng.bernoulli(spec.image_rate)) {
        std::vector<double> img(spec.d_img);
        for (int k = 0; k < spec.d_img; ++k) img[k] = T.image_proto[k] + 0.5 * rng.normal();
        e.image_features.push_back(std::move(img));
      }
      e.metadata.exercise_type = schema.types[T.type];
      e.metadata.difficulty = std::clamp(T.difficulty + static_cast<int>(rng.below(3)) - 1, 1, 5);
      e.metadata.knowledge_concepts = T.concepts;
      e.learning_stage = T.stage;
      if (rng.bernoulli(0.3)) {
        e.learning_stage.semester = 1 + static_cast<int>(rng.below(2));
        e.learning_stage.grade = std::clamp(T.stage.grade + static_cast<int>(rng.below(3)) - 1, 7, 9);
      }
      exercises.push_back(std::move(e));
      data.group.push_back(t);
      data.mutated_condition.push_back(mutated);
    }
  }
  data.corpus = Corpus(schema, std::move(exercises));

  // Pairs: seeds with within-template positives, sibling-template hard
  // negatives (the lexical-match analogue) and random negatives.
  const std::size_t n = data.corpus.size();
  std::vector<std::vector<std::size_t>> members(spec.n_templates);
  for (std::size_t i = 0; i < n; ++i) members[data.group[i]].push_back(i);
  std::vector<std::size_t> seed_order(n);
  for (std::size_t i = 0; i < n; ++i) seed_order[i] = i;
  rng.shuffle(seed_order);

  const int n_pos = static_cast<int>(std::lround(spec.positive_fraction * spec.candidates_per_seed));
  std::size_t seed_cursor = 0;
  while (static_cast<int>(data.pairs.size()) < spec.n_pairs) {
    const std::size_t s = seed_order[seed_cursor++ % n];
    const int t = data.group[s];
    std::set<std::size_t> used{s};
    std::vector<std::size_t> cands;
    auto draw_from = [&](const std::vector<std::size_t>& pool, int k) {
      std::vector<std::size_t> avail;
      for (auto i : pool)
        if (!used.count(i)) avail.push_back(i);
      for (auto i : pick(avail, static_cast<std::size_t>(std::max(k, 0)), rng)) {
        used.insert(i);
        cands.push_back(i);
      }
    };
    draw_from(members[t], n_pos);
    const int n_neg = spec.candidates_per_seed - static_cast<int>(cands.size());
    const int sib = (t % 2 == 0) ? t + 1 : t - 1;
    const int n_hard = (sib < spec.n_templates) ? n_neg / 2 : 0;
    if (n_hard > 0) draw_from(members[sib], n_hard);
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < n; ++i)
      if (data.group[i] != t) others.push_back(i);
    draw_from(others, spec.candidates_per_seed - static_cast<int>(cands.size()));

    for (auto c : cands) {
      if (static_cast<int>(data.pairs.size()) >= spec.n_pairs) break;
      LabeledPair p;
      p.a_id = data.corpus[s].id;
      p.b_id = data.corpus[c].id;
      const bool same = data.group[c] == t;
      p.label = same ? PairLabel::similar : PairLabel::dissimilar;
      if (same) {
        p.variant = data.mutated_condition[s] != data.mutated_condition[c] ? VariantFlag::variant
                                                                           : VariantFlag::plain_similar;
      }
      data.pairs.push_back(std::move(p));
    }
  }

  const auto n_flip = static_cast<std::size_t>(std::llround(spec.noise_rate * static_cast<double>(data.pairs.size())));
  data.flipped = rng.sample(data.pairs.size(), n_flip);
  std::sort(data.flipped.begin(), data.flipped.end());
  for (auto i : data.flipped) {
    auto& l = data.pairs[i].label;
    l = l == PairLabel::similar ? PairLabel::dissimilar : PairLabel::similar;
  }
  // Three annotators; the dissenting third vote appears in about a fifth of
  // the pairs.
  for (auto& p : data.pairs) {
    const PairLabel other = p.label == PairLabel::similar ? PairLabel::dissimilar : PairLabel::similar;
    p.votes = {p.label, p.label, rng.bernoulli(0.2) ? other : p.label};
    rng.shuffle(p.votes);
  }
  return data;
}

namespace {
// Position just after the first '$' that opens a formula, or npos.
std::size_t formula_start(const std::string& s) { return s.find('$'); }
}  // namespace

Exercise make_distractor_copy(const Exercise& e, Rng& rng, const std::string& new_id) {
  Exercise out = e;
  out.id = new_id;
  const std::string phrase = std::string("in ") + kMonths[rng.below(6)] + " " + std::to_string(2000 + rng.below(25));
  const auto pos = formula_start(out.stem);
  if (pos == std::string::npos) out.stem += " " + phrase;
  else out.stem.insert(pos, phrase + " ");
  return out;
}

Exercise make_degree_change(const Exercise& e, const std::string& new_id) {
  Exercise out = e;
  out.id = new_id;
  const auto open = out.stem.find('$');
  const auto close = open == std::string::npos ? std::string::npos : out.stem.find('$', open + 1);
  if (open == std::string::npos || close == std::string::npos) {
    out.stem += " $x^2$";
    return out;
  }
  for (std::size_t i = open + 1; i < close; ++i) {
    const char ch = out.stem[i];
    if (!std::isalpha(static_cast<unsigned char>(ch))) continue;
    // skip command names such as \frac
    std::size_t j = i;
    while (j > open + 1 && std::isalpha(static_cast<unsigned char>(out.stem[j - 1]))) --j;
    if (j > open + 1 && out.stem[j - 1] == '\\') {
      while (i + 1 < close && std::isalpha(static_cast<unsigned char>(out.stem[i + 1]))) ++i;
      continue;
    }
    if (out.stem.compare(i + 1, 2, "^2") == 0) out.stem.erase(i + 1, 2);
    else out.stem.insert(i + 1, "^2");
    return out;
  }
  out.stem.insert(close, "+x^2");
  return out;
}

json synthetic_manifest(const SyntheticData& data) {
  json j;
  j["group"] = data.group;
  j["flipped"] = data.flipped;
  std::vector<int> mutated(data.mutated_condition.begin(), data.mutated_condition.end());
  j["mutated_condition"] = mutated;
  json tmpls = json::array();
  for (const auto& t : data.templates) {
    tmpls.push_back({{"family", t.family},
                     {"family_words", t.family_words},
                     {"stem_words", t.stem_words},
                     {"condition_words", t.condition_words},
                     {"variant_condition_words", t.variant_condition_words},
                     {"method_words", t.method_words}});
  }
  j["templates"] = tmpls;
  return j;
}

}  // namespace fse
