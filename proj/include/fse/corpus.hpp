#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fse/common.hpp"

namespace fse {

// Curriculum position. Ordered lexicographically: grade, then semester.
struct LearningStage {
  int grade = 0;
  int semester = 0;
  auto operator<=>(const LearningStage&) const = default;
};

struct Metadata {
  std::string exercise_type;
  int difficulty = 1;                   // 1..levels
  std::vector<int> knowledge_concepts;  // ids into the concept dictionary
  bool operator==(const Metadata&) const = default;
};

struct Exercise {
  std::string id;
  std::string stem;
  std::vector<std::string> options;
  std::string answer;
  std::string analysis;
  std::vector<std::vector<double>> image_features;
  Metadata metadata;
  LearningStage learning_stage;
  bool operator==(const Exercise&) const = default;
};

// Closed dictionaries the metadata is validated against.
struct MetadataSchema {
  std::vector<std::string> types{"choice", "fill", "proof", "calc"};
  int difficulty_levels = 5;
  int n_concepts = 0;  // 0 while ingesting: inferred as max id + 1
  int d_img = 0;       // 0 while ingesting: inferred from the first image
  bool operator==(const MetadataSchema&) const = default;

  int type_index(const std::string& type) const;
};

nlohmann::json to_json(const Exercise& e);
Exercise exercise_from_json(const nlohmann::json& j);

// Immutable, validated set of exercises with id lookup.
class Corpus {
 public:
  Corpus() = default;
  Corpus(MetadataSchema schema, std::vector<Exercise> exercises);

  std::size_t size() const { return exercises_.size(); }
  bool empty() const { return exercises_.empty(); }
  const Exercise& operator[](std::size_t i) const { return exercises_[i]; }
  const std::vector<Exercise>& exercises() const { return exercises_; }
  const MetadataSchema& schema() const { return schema_; }

  std::optional<std::size_t> find(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;  // throws NotFoundError

  bool operator==(const Corpus& other) const {
    return schema_ == other.schema_ && exercises_ == other.exercises_;
  }

 private:
  MetadataSchema schema_;
  std::vector<Exercise> exercises_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// Throws ValidationError when e violates the schema.
void validate_exercise(const Exercise& e, const MetadataSchema& schema);

// One JSON object per line. Blank lines are skipped. Schema fields left at 0
// are inferred from the data.
Corpus load_corpus(const std::string& path, MetadataSchema schema = {});
Corpus parse_corpus_jsonl(const std::string& text, MetadataSchema schema = {});
void save_corpus_jsonl(const Corpus& corpus, const std::string& path);

// Versioned binary snapshot: magic "FSECORPS", u32 version, schema JSON,
// u64 count, length-prefixed JSON records, FNV-1a trailer.
std::string serialize_snapshot(const Corpus& corpus);
Corpus deserialize_snapshot(std::string_view bytes);
void save_snapshot(const Corpus& corpus, const std::string& path);
Corpus load_snapshot(const std::string& path);

// ---------------------------------------------------------------------------
// Labeled pairs

enum class PairLabel { dissimilar = 0, similar = 1 };
enum class VariantFlag { variant, plain_similar };

struct LabeledPair {
  std::string a_id;
  std::string b_id;
  PairLabel label = PairLabel::dissimilar;
  std::optional<VariantFlag> variant;
  std::vector<PairLabel> votes;
  bool operator==(const LabeledPair&) const = default;

  int y() const { return label == PairLabel::similar ? 1 : 0; }
};

// Majority of votes; throws ValidationError on an even tie or empty input.
PairLabel majority_label(const std::vector<PairLabel>& votes);

// a != b, both ids exist, label agrees with votes.
void validate_pairs(const Corpus& corpus, const std::vector<LabeledPair>& pairs);

nlohmann::json to_json(const LabeledPair& p);
LabeledPair pair_from_json(const nlohmann::json& j);
std::vector<LabeledPair> load_pairs(const std::string& path);
void save_pairs(const std::vector<LabeledPair>& pairs, const std::string& path);

// Splits pairs by their seed exercise (a_id) so no seed straddles the split.
struct PairSplit {
  std::vector<LabeledPair> train;
  std::vector<LabeledPair> test;
};
PairSplit split_by_seed(const std::vector<LabeledPair>& pairs, double test_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic corpus with known ground truth

struct SyntheticSpec {
  int n_templates = 10;
  int per_template = 50;
  double noise_rate = 0.15;
  int vocab_size = 200;  // filler word pool
  std::uint64_t seed = 7;
  int n_pairs = 1500;
  int candidates_per_seed = 10;
  double positive_fraction = 0.4;
  double variant_rate = 0.25;
  int d_img = 32;
  double image_rate = 0.9;

  void validate() const;
};

// Template skeleton kept so callers can derive perturbed copies of exercises.
struct TemplateInfo {
  int family = 0;
  std::vector<std::string> family_words;
  std::vector<std::string> stem_words;
  std::vector<std::string> condition_words;
  std::vector<std::string> variant_condition_words;
  std::vector<std::string> method_words;
};

struct SyntheticData {
  Corpus corpus;
  std::vector<int> group;  // template index per exercise
  std::vector<bool> mutated_condition;
  std::vector<TemplateInfo> templates;
  std::vector<LabeledPair> pairs;
  std::vector<std::size_t> flipped;  // indices into pairs whose label was flipped

  // Ground-truth similarity (same template).
  bool similar(const std::string& a, const std::string& b) const;
  // Ground-truth similar ids for the exercise at index i (excluding itself).
  std::vector<std::string> mates(std::size_t i) const;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Table-3 style perturbations on exercise text. make_distractor_copy inserts
// a distracting date phrase (a duplicate); make_degree_change raises or
// lowers the degree of the first formula variable (not a duplicate).
Exercise make_distractor_copy(const Exercise& e, Rng& rng, const std::string& new_id);
Exercise make_degree_change(const Exercise& e, const std::string& new_id);

nlohmann::json synthetic_manifest(const SyntheticData& data);

}  // namespace fse
