#include "fse/config.hpp"

#include <charconv>

namespace fse {

namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d{
      {"threads", "1"},
      {"synth.templates", "10"},
      {"synth.per_template", "50"},
      {"synth.noise", "0.15"},
      {"synth.vocab", "200"},
      {"synth.pairs", "1500"},
      {"synth.seed", "7"},
      {"text.stop_words", ""},
      {"esrm.dim", "32"},
      {"esrm.seed", "7"},
      {"pretrain.epochs", "20"},
      {"pretrain.lr", "0.05"},
      {"pretrain.batch", "32"},
      {"pretrain.tau", "0.1"},
      {"finetune.epochs", "5"},
      {"finetune.lr", "0.01"},
      {"finetune.batch", "16"},
      {"finetune.negatives", "8"},
      {"bm25.k1", "1.2"},
      {"bm25.b", "0.75"},
      {"bm25.concept_bonus", "0.5"},
      {"recall.k_exact", "200"},
      {"recall.k_embed", "200"},
      {"recall.n", "100"},
      {"recall.dedup_threshold", "0.5"},
      {"dedup.anchors", "300"},
      {"rank.lr", "0.01"},
      {"rank.epochs", "3"},
      {"rank.batch", "32"},
      {"rank.tasks", "t1,t2,t3"},
      {"rank.moe", "true"},
      {"rank.alpha", "1,1,1"},
      {"rank.seed", "7"},
      {"cl.folds", "5"},
      {"cl.oof_epochs", "3"},
      {"cl.strategy", "noise_rate"},
      {"cl.seed", "7"},
      {"cl.threads", "1"},
      {"rerank.variant_threshold", "0.5"},
      {"rerank.enable_variant", "true"},
      {"eval.test_fraction", "0.2"},
      {"eval.seed", "7"},
      {"eval.recall_k", "100"},
      {"cache.size", "1024"},
      {"service.port", "8080"},
      {"service.batch_window_ms", "10"},
      {"service.max_batch", "32"},
      {"service.max_pending", "256"},
  };
  return d;
}

// Keys that change how results are produced, not what they are.
bool affects_results(const std::string& key) {
  return key != "threads" && key != "cl.threads" && key.rfind("cache.", 0) != 0 && key.rfind("service.", 0) != 0;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config key '" + key + "': '" + v + "' is not a valid number");
  return out;
}

}  // namespace

Config::Config() : values_(defaults()) {}

Config Config::parse(std::string_view text) {
  Config c;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    try {
      c.set(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return c;
}

Config Config::load(const std::string& path) { return parse(read_file(path)); }

void Config::set(const std::string& key, const std::string& value) {
  if (key == "seed") {
    parse_number<std::uint64_t>(key, value);
    for (auto& [k, v] : values_)
      if (k.size() > 5 && k.ends_with(".seed")) v = value;
    return;
  }
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void Config::assign(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int Config::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
std::uint64_t Config::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }
double Config::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }

bool Config::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::string_view s = get(key);
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(',', start);
    if (end == std::string_view::npos) end = s.size();
    auto item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = end + 1;
  }
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : get_list(key)) out.push_back(parse_number<double>(key, item));
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_)
    if (affects_results(k)) out += k + "=" + v + "\n";
  return out;
}

std::string Config::hash() const { return hex64(fnv1a(canonical())); }

}  // namespace fse
