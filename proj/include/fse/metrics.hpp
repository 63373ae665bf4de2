#pragma once

#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "fse/common.hpp"

namespace fse {

// A retrieved list for one query together with the ids judged relevant to it.
struct JudgedList {
  std::string query_id;
  std::vector<std::string> retrieved;  // in rank order
  std::unordered_set<std::string> relevant;
};

struct RecallSeed {
  std::string id;
  std::size_t relevant = 0;  // T_i
  std::size_t hits = 0;      // TP_i@K
  bool operator==(const RecallSeed&) const = default;
};

struct RecallAtK {
  std::size_t k = 0;
  double value = 0.0;
  std::vector<RecallSeed> seeds;     // seeds that count, N = seeds.size()
  std::vector<std::string> skipped;  // seeds without annotated similars
  std::vector<std::string> warnings;
};

// mean over seeds of |top-K ∩ relevant| / |relevant|. Seeds with no relevant
// ids are skipped with a warning; throws ValidationError when none remain.
RecallAtK recall_at_k(const std::vector<JudgedList>& lists, std::size_t k);

struct PrecisionQuery {
  std::string id;
  std::vector<std::size_t> hits;  // relevant in top-K, one per K
  std::size_t returned = 0;
  bool operator==(const PrecisionQuery&) const = default;
};

struct PrecisionAtK {
  std::vector<std::size_t> ks;
  std::vector<double> values;  // one per K
  std::vector<PrecisionQuery> queries;
  std::vector<std::string> warnings;

  double at(std::size_t k) const;  // throws NotFoundError for an unreported K
};

// mean over queries of |top-K ∩ relevant| / K. A list shorter than K keeps
// the denominator K; each such query is noted in warnings. Throws
// ValidationError on an empty query set or K = 0.
PrecisionAtK precision_at_k(const std::vector<JudgedList>& lists, const std::vector<std::size_t>& ks = {1, 3, 5});

struct EvalReport {
  static constexpr int kSchemaVersion = 1;

  std::string config_hash;
  std::map<std::string, std::string> versions;  // snapshot name -> version
  RecallAtK recall;
  PrecisionAtK ranked;        // after the rank stage
  PrecisionAtK recall_order;  // recall output taken as is

  nlohmann::json to_json() const;
  // Checks the schema version and field shapes; throws ValidationError.
  static EvalReport from_json(const nlohmann::json& j);
  // Aligned plain-text summary.
  std::string table() const;
};

}  // namespace fse
