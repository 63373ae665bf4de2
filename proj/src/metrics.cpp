#include "fse/metrics.hpp"

#include <algorithm>
#include <cstdio>

namespace fse {

namespace {

std::size_t hits_in_top(const JudgedList& l, std::size_t k) {
  std::size_t n = 0;
  const auto top = std::min(k, l.retrieved.size());
  for (std::size_t i = 0; i < top; ++i) n += l.relevant.count(l.retrieved[i]);
  return n;
}

nlohmann::json precision_json(const PrecisionAtK& p) {
  nlohmann::json q = nlohmann::json::array();
  for (const auto& x : p.queries) q.push_back({{"id", x.id}, {"hits", x.hits}, {"returned", x.returned}});
  return {{"k", p.ks}, {"value", p.values}, {"queries", q}, {"warnings", p.warnings}};
}

PrecisionAtK precision_from_json(const nlohmann::json& j) {
  PrecisionAtK p;
  p.ks = j.at("k").get<std::vector<std::size_t>>();
  p.values = j.at("value").get<std::vector<double>>();
  if (p.ks.size() != p.values.size()) throw ValidationError("precision k/value length mismatch");
  for (const auto& q : j.at("queries")) {
    PrecisionQuery x{q.at("id").get<std::string>(), q.at("hits").get<std::vector<std::size_t>>(),
                     q.at("returned").get<std::size_t>()};
    if (x.hits.size() != p.ks.size()) throw ValidationError("precision query '" + x.id + "' has wrong hit count");
    p.queries.push_back(std::move(x));
  }
  p.warnings = j.at("warnings").get<std::vector<std::string>>();
  return p;
}

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string(what) + " outside [0, 1]");
}

}  // namespace

RecallAtK recall_at_k(const std::vector<JudgedList>& lists, std::size_t k) {
  RecallAtK out;
  out.k = k;
  double sum = 0.0;
  for (const auto& l : lists) {
    if (l.relevant.empty()) {
      out.skipped.push_back(l.query_id);
      out.warnings.push_back("seed '" + l.query_id + "' has no annotated similars; excluded");
      continue;
    }
    RecallSeed s{l.query_id, l.relevant.size(), hits_in_top(l, k)};
    sum += static_cast<double>(s.hits) / static_cast<double>(s.relevant);
    out.seeds.push_back(std::move(s));
  }
  if (out.seeds.empty()) throw ValidationError("recall@k needs at least one seed with annotated similars");
  out.value = sum / static_cast<double>(out.seeds.size());
  return out;
}

double PrecisionAtK::at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return values[i];
  throw NotFoundError("precision@" + std::to_string(k) + " was not computed");
}

PrecisionAtK precision_at_k(const std::vector<JudgedList>& lists, const std::vector<std::size_t>& ks) {
  if (lists.empty()) throw ValidationError("precision@k needs at least one query");
  if (ks.empty() || std::find(ks.begin(), ks.end(), 0u) != ks.end()) throw ValidationError("precision@k needs K >= 1");
  PrecisionAtK out;
  out.ks = ks;
  out.values.assign(ks.size(), 0.0);
  const auto max_k = *std::max_element(ks.begin(), ks.end());
  for (const auto& l : lists) {
    PrecisionQuery q{l.query_id, {}, l.retrieved.size()};
    for (std::size_t i = 0; i < ks.size(); ++i) {
      q.hits.push_back(hits_in_top(l, ks[i]));
      out.values[i] += static_cast<double>(q.hits.back()) / static_cast<double>(ks[i]);
    }
    if (l.retrieved.size() < max_k)
      out.warnings.push_back("query '" + l.query_id + "' returned " + std::to_string(l.retrieved.size()) +
                             " results; missing slots count as misses");
    out.queries.push_back(std::move(q));
  }
  for (auto& v : out.values) v /= static_cast<double>(lists.size());
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : recall.seeds) seeds.push_back({{"id", s.id}, {"relevant", s.relevant}, {"hits", s.hits}});
  return {{"schema_version", kSchemaVersion},
          {"config_hash", config_hash},
          {"versions", versions},
          {"recall", {{"k", recall.k},
                      {"value", recall.value},
                      {"n", recall.seeds.size()},
                      {"seeds", seeds},
                      {"skipped", recall.skipped},
                      {"warnings", recall.warnings}}},
          {"precision", precision_json(ranked)},
          {"precision_recall_order", precision_json(recall_order)}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw ValidationError("unsupported eval report schema version");
    EvalReport r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.versions = j.at("versions").get<std::map<std::string, std::string>>();
    const auto& rc = j.at("recall");
    r.recall.k = rc.at("k").get<std::size_t>();
    r.recall.value = rc.at("value").get<double>();
    for (const auto& s : rc.at("seeds"))
      r.recall.seeds.push_back(
          {s.at("id").get<std::string>(), s.at("relevant").get<std::size_t>(), s.at("hits").get<std::size_t>()});
    if (rc.at("n").get<std::size_t>() != r.recall.seeds.size() || r.recall.seeds.empty())
      throw ValidationError("recall seed count mismatch");
    r.recall.skipped = rc.at("skipped").get<std::vector<std::string>>();
    r.recall.warnings = rc.at("warnings").get<std::vector<std::string>>();
    r.ranked = precision_from_json(j.at("precision"));
    r.recall_order = precision_from_json(j.at("precision_recall_order"));
    check_unit(r.recall.value, "recall");
    for (double v : r.ranked.values) check_unit(v, "precision");
    for (double v : r.recall_order.values) check_unit(v, "precision");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed eval report: ") + e.what());
  }
}

std::string EvalReport::table() const {
  std::string out;
  char buf[128];
  auto row = [&](const std::string& name, const std::string& value) {
    std::snprintf(buf, sizeof buf, "%-28s %12s\n", name.c_str(), value.c_str());
    out += buf;
  };
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  row("metric", "value");
  row("Recall@" + std::to_string(recall.k), num(recall.value));
  for (std::size_t i = 0; i < ranked.ks.size(); ++i) row("P@" + std::to_string(ranked.ks[i]), num(ranked.values[i]));
  for (std::size_t i = 0; i < recall_order.ks.size(); ++i)
    row("P@" + std::to_string(recall_order.ks[i]) + " (recall order)", num(recall_order.values[i]));
  row("seeds (recall)", std::to_string(recall.seeds.size()));
  row("queries (precision)", std::to_string(ranked.queries.size()));
  row("config hash", config_hash);
  return out;
}

}  // namespace fse
