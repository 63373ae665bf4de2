#include "fse/rerank.hpp"

#include <cstdlib>

namespace fse {

namespace {

const char* ability_name(Ability a) {
  switch (a) {
    case Ability::weak: return "weak";
    case Ability::average: return "average";
    case Ability::excellent: return "excellent";
  }
  return "?";
}

const char* mode_name(StageMode m) { return m == StageMode::synchronous ? "synchronous" : "review"; }

}  // namespace

std::string StudentProfile::key() const {
  return std::string(ability_name(ability)) + "/" + mode_name(stage_mode) + "/" +
         std::to_string(current_stage.grade) + "." + std::to_string(current_stage.semester);
}

StudentProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("profile must be a JSON object");
  for (const char* k : {"ability", "stage_mode", "current_stage"})
    if (!j.contains(k)) throw ValidationError(std::string("profile is missing '") + k + "'");
  StudentProfile p;
  const auto& a = j.at("ability");
  const auto& m = j.at("stage_mode");
  const auto& s = j.at("current_stage");
  if (!a.is_string() || !m.is_string() || !s.is_object()) throw ValidationError("profile fields have wrong types");
  const auto as = a.get<std::string>();
  if (as == "weak") p.ability = Ability::weak;
  else if (as == "average") p.ability = Ability::average;
  else if (as == "excellent") p.ability = Ability::excellent;
  else throw ValidationError("unknown ability '" + as + "'");
  const auto ms = m.get<std::string>();
  if (ms == "synchronous") p.stage_mode = StageMode::synchronous;
  else if (ms == "review") p.stage_mode = StageMode::review;
  else throw ValidationError("unknown stage_mode '" + ms + "'");
  if (!s.contains("grade") || !s.contains("semester") || !s.at("grade").is_number_integer() ||
      !s.at("semester").is_number_integer())
    throw ValidationError("current_stage needs integer grade and semester");
  p.current_stage = {s.at("grade").get<int>(), s.at("semester").get<int>()};
  if (p.current_stage.grade < 1 || (p.current_stage.semester != 1 && p.current_stage.semester != 2))
    throw ValidationError("current_stage out of range");
  return p;
}

nlohmann::json to_json(const StudentProfile& p) {
  return {{"ability", ability_name(p.ability)},
          {"stage_mode", mode_name(p.stage_mode)},
          {"current_stage", {{"grade", p.current_stage.grade}, {"semester", p.current_stage.semester}}}};
}

CandidateList stage_filter(const CandidateList& candidates, const Corpus& corpus,
                           const std::optional<StudentProfile>& profile) {
  if (!profile) return candidates;
  const auto cur = profile->current_stage;
  CandidateList out;
  for (const auto& c : candidates) {
    const auto& s = corpus[c.index].learning_stage;
    const bool keep = profile->stage_mode == StageMode::synchronous ? s <= cur : s.semester <= cur.semester;
    if (keep) out.push_back(c);
  }
  return out;
}

CandidateList personalize_filter(const CandidateList& candidates, const Corpus& corpus, int query_difficulty,
                                 const std::optional<StudentProfile>& profile) {
  if (!profile) return candidates;
  CandidateList out;
  for (const auto& c : candidates) {
    const int d = corpus[c.index].metadata.difficulty;
    bool keep = false;
    switch (profile->ability) {
      case Ability::excellent: keep = d >= query_difficulty; break;
      case Ability::weak: keep = d <= query_difficulty; break;
      case Ability::average: keep = std::abs(d - query_difficulty) <= 1; break;
    }
    if (keep) out.push_back(c);
  }
  return out;
}

nlohmann::json RerankedResult::to_json() const {
  auto items = [](const std::vector<RerankedItem>& v) {
    auto arr = nlohmann::json::array();
    for (const auto& it : v) {
      nlohmann::json j{{"id", it.candidate.id},
                       {"score", it.candidate.score},
                       {"source", source_name(it.candidate.source)},
                       {"stage_checked", it.stage_checked},
                       {"difficulty_checked", it.difficulty_checked}};
      j["variant_probability"] = it.variant_probability ? nlohmann::json(*it.variant_probability) : nlohmann::json(nullptr);
      arr.push_back(std::move(j));
    }
    return arr;
  };
  return {{"variants", items(variants)}, {"similar", items(similar)}};
}

RerankedResult rerank(const Exercise& query, const CandidateList& ranked, const Corpus& corpus,
                      const std::optional<StudentProfile>& profile, const RerankConfig& cfg,
                      const VariantModel& variant) {
  if (cfg.enable_variant && (!variant.featurizer || !variant.classifier || !variant.classifier->trained()))
    throw ConfigError("variant re-rank is enabled but no trained variant classifier was supplied");
  const auto kept = personalize_filter(stage_filter(ranked, corpus, profile), corpus, query.metadata.difficulty, profile);
  RerankedResult out;
  std::optional<PairFeaturizer::View> qv;
  if (cfg.enable_variant && !kept.empty()) qv = variant.featurizer->view(query);
  for (const auto& c : kept) {
    RerankedItem it{c, std::nullopt, profile.has_value(), profile.has_value()};
    if (cfg.enable_variant) {
      const double p = variant.classifier->probability(*variant.featurizer, *qv, variant.featurizer->view(corpus[c.index]));
      it.variant_probability = p;
      if (p >= cfg.variant_threshold) {
        out.variants.push_back(std::move(it));
        continue;
      }
    }
    out.similar.push_back(std::move(it));
  }
  return out;
}

}  // namespace fse
