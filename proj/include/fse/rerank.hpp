#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fse/pairclf.hpp"
#include "fse/recall.hpp"

namespace fse {

enum class Ability { weak, average, excellent };
enum class StageMode { synchronous, review };

struct StudentProfile {
  Ability ability = Ability::average;
  StageMode stage_mode = StageMode::synchronous;
  LearningStage current_stage;
  bool operator==(const StudentProfile&) const = default;

  // Compact form used in cache keys: "excellent/review/8.1".
  std::string key() const;
};

// Requires ability, stage_mode and current_stage {grade >= 1, semester 1|2}.
StudentProfile profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudentProfile& p);

struct RerankConfig {
  double variant_threshold = 0.5;
  bool enable_variant = true;
};

// Candidates whose learning stage a student has reached: synchronous keeps
// (grade, semester) <= current; review compares the semester component only.
// Identity without a profile; order preserved.
CandidateList stage_filter(const CandidateList& candidates, const Corpus& corpus,
                           const std::optional<StudentProfile>& profile);

// excellent keeps difficulty >= query, weak <= query, average within one
// level. Identity without a profile; order preserved.
CandidateList personalize_filter(const CandidateList& candidates, const Corpus& corpus, int query_difficulty,
                                 const std::optional<StudentProfile>& profile);

struct RerankedItem {
  Candidate candidate;
  std::optional<double> variant_probability;
  bool stage_checked = false;
  bool difficulty_checked = false;
  bool operator==(const RerankedItem&) const = default;
};

struct RerankedResult {
  std::vector<RerankedItem> variants;  // shown first
  std::vector<RerankedItem> similar;
  bool operator==(const RerankedResult&) const = default;
  nlohmann::json to_json() const;
};

// The variant model: directional classifier over (query, candidate).
struct VariantModel {
  const PairFeaturizer* featurizer = nullptr;
  const PairClassifier* classifier = nullptr;
};

// stage_filter, then personalize_filter, then the variant split; each list
// keeps the ranking order. With enable_variant off everything lands in the
// similar list; with it on, a missing or untrained classifier is a ConfigError.
RerankedResult rerank(const Exercise& query, const CandidateList& ranked, const Corpus& corpus,
                      const std::optional<StudentProfile>& profile, const RerankConfig& config,
                      const VariantModel& variant = {});

}  // namespace fse
