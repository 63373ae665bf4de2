#include "fse/textnorm.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace fse {

namespace {

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = lower(c);
  return out;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Length of an HTML tag starting at s[i] == '<', or 0 when it is not a tag.
// Accepts <name ...>, </name>, <!-- ... -->, <!DOCTYPE ...>.
std::size_t tag_length(std::string_view s, std::size_t i) {
  if (s.substr(i, 4) == "<!--") {
    auto end = s.find("-->", i + 4);
    return end == std::string_view::npos ? 0 : end + 3 - i;
  }
  std::size_t j = i + 1;
  if (j < s.size() && (s[j] == '/' || s[j] == '!')) ++j;
  if (j >= s.size() || !std::isalpha(static_cast<unsigned char>(s[j]))) return 0;
  while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '-')) ++j;
  if (j >= s.size()) return 0;
  if (s[j] == '>') return j + 1 - i;
  if (s[j] == '/' && j + 1 < s.size() && s[j + 1] == '>') return j + 2 - i;
  if (!is_space(s[j])) return 0;
  auto end = s.find('>', j);
  if (end == std::string_view::npos) return 0;
  if (s.substr(j, end - j).find('<') != std::string_view::npos) return 0;
  return end + 1 - i;
}

// Strips tags from a prose span, replacing each by one space. <style> and
// <script> elements are dropped with their content.
std::string strip_tags(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '<') {
      if (auto n = tag_length(s, i)) {
        const std::string tag = to_lower(s.substr(i, std::min<std::size_t>(n, 8)));
        std::size_t skip = n;
        for (const char* block : {"style", "script"}) {
          if (tag.rfind(std::string("<") + block, 0) == 0) {
            const std::string close = std::string("</") + block;
            const std::string rest = to_lower(s.substr(i + n));
            auto end = rest.find(close);
            if (end != std::string::npos) {
              auto gt = rest.find('>', end);
              skip = n + (gt == std::string::npos ? rest.size() : gt + 1);
            }
          }
        }
        out += ' ';
        i += skip;
        continue;
      }
    }
    out += s[i++];
  }
  return out;
}

// Spans of text split at unescaped '$' delimiters. Odd-indexed spans are
// formula bodies; a trailing unmatched '$' leaves the rest as prose.
struct Span {
  std::string_view text;
  bool formula;
};

std::vector<Span> split_formulas(std::string_view s) {
  std::vector<Span> spans;
  std::size_t i = 0;
  while (i <= s.size()) {
    auto open = s.find('$', i);
    if (open == std::string_view::npos) {
      spans.push_back({s.substr(i), false});
      break;
    }
    auto close = s.find('$', open + 1);
    if (close == std::string_view::npos) {
      spans.push_back({s.substr(i), false});
      break;
    }
    spans.push_back({s.substr(i, open - i), false});
    spans.push_back({s.substr(open + 1, close - open - 1), true});
    i = close + 1;
  }
  return spans;
}

// A word or formula with whether whitespace separated it from the previous
// unit in the source.
struct Unit {
  std::string text;
  bool spaced;
};

// Returns whether the span ends in whitespace (or a dropped stop word).
bool prose_units(std::string_view prose, bool spaced_before, const StopWords& stop_words, std::vector<Unit>& out) {
  const std::string stripped = strip_tags(prose);
  std::size_t i = 0;
  bool spaced = spaced_before;
  while (i < stripped.size()) {
    if (is_space(stripped[i])) {
      spaced = true;
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < stripped.size() && !is_space(stripped[j])) ++j;
    std::string word = stripped.substr(i, j - i);
    if (!stop_words.empty() && stop_words.count(to_lower(word))) {
      spaced = true;
    } else {
      out.push_back({std::move(word), spaced});
      spaced = false;
    }
    i = j;
  }
  return spaced;
}

}  // namespace

std::string clean_text(std::string_view raw, const StopWords& stop_words) {
  std::vector<Unit> units;
  bool pending_space = false;
  for (const auto& span : split_formulas(raw)) {
    if (span.formula) {
      units.push_back({"$" + std::string(span.text) + "$", pending_space});
      pending_space = false;
      continue;
    }
    pending_space = prose_units(span.text, pending_space, stop_words, units);
  }
  std::string out;
  for (const auto& u : units) {
    if (!out.empty() && u.spaced) out += ' ';
    out += u.text;
  }
  return out;
}

std::string normalize_text(std::string_view raw, const StopWords& stop_words) {
  const std::string cleaned = clean_text(raw, stop_words);
  std::string out;
  for (const auto& span : split_formulas(cleaned)) {
    if (span.formula) out += normalize_formula(span.text).canonical;
    else out.append(span.text);
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view s) {
  static const std::string kDropped = ",.;:!?\"'`";
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_word = [](unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; };
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (is_space(static_cast<char>(c))) {
      ++i;
      continue;
    }
    if (is_word(c)) {
      std::size_t j = i;
      while (j < s.size()) {
        const auto d = static_cast<unsigned char>(s[j]);
        if (is_word(d)) {
          ++j;
        } else if (d == '.' && j + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[j + 1])) &&
                   std::isdigit(static_cast<unsigned char>(s[j - 1]))) {
          ++j;  // decimal point inside a number
        } else {
          break;
        }
      }
      out.push_back(to_lower(s.substr(i, j - i)));
      i = j;
      continue;
    }
    if (kDropped.find(static_cast<char>(c)) == std::string::npos) out.emplace_back(1, static_cast<char>(c));
    ++i;
  }
  return out;
}

Vocab::Vocab() {
  for (const char* t : {"[PAD]", "[UNK]", "[SEP]"}) add(t);
}

void Vocab::add(const std::string& token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& documents, int min_count) {
  std::map<std::string, long> counts;
  for (const auto& doc : documents)
    for (const auto& t : doc) ++counts[t];
  std::vector<std::pair<std::string, long>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [tok, n] : ordered)
    if (n >= min_count && !v.contains(tok)) v.add(tok);
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocab::serialize() const {
  std::string out;
  for (std::size_t i = kReserved; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\n';
  }
  return out;
}

Vocab Vocab::deserialize(std::string_view text) {
  Vocab v;
  std::size_t i = 0;
  std::size_t lineno = 0;
  while (i < text.size()) {
    auto nl = text.find('\n', i);
    if (nl == std::string_view::npos) nl = text.size();
    ++lineno;
    std::string tok(text.substr(i, nl - i));
    if (tok.empty()) throw ParseError("empty vocabulary entry", lineno);
    if (v.contains(tok)) throw ParseError("duplicate vocabulary entry '" + tok + "'", lineno);
    v.add(tok);
    i = nl + 1;
  }
  return v;
}

TokenSequence tokenize(std::string_view text, const Vocab& vocab, const StopWords& stop_words) {
  TokenSequence seq;
  for (const auto& t : split_tokens(normalize_text(text, stop_words))) seq.ids.push_back(vocab.id(t));
  return seq;
}

std::vector<std::string> detokenize(const TokenSequence& seq, const Vocab& vocab) {
  std::vector<std::string> out;
  out.reserve(seq.ids.size());
  for (int id : seq.ids) out.push_back(vocab.token(id));
  return out;
}

std::string stem_side(const Exercise& e) {
  std::string s = e.stem;
  for (const auto& o : e.options) {
    s += ' ';
    s += o;
  }
  return s;
}

std::string analysis_side(const Exercise& e) {
  if (e.answer.empty()) return e.analysis;
  return e.answer + " " + e.analysis;
}

Vocab build_vocab(const Corpus& corpus, const StopWords& stop_words, int min_count) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(corpus.size() * 2);
  for (const auto& e : corpus.exercises()) {
    docs.push_back(split_tokens(normalize_text(stem_side(e), stop_words)));
    docs.push_back(split_tokens(normalize_text(analysis_side(e), stop_words)));
  }
  return Vocab::build(docs, min_count);
}

MetadataEncoding encode_metadata(const Metadata& m, const MetadataSchema& schema) {
  MetadataEncoding enc;
  enc.type_index = schema.type_index(m.exercise_type);
  enc.type = Vec::Zero(static_cast<Eigen::Index>(schema.types.size()));
  enc.type[enc.type_index] = 1.0;
  if (m.difficulty < 1 || m.difficulty > schema.difficulty_levels) {
    throw ValidationError("difficulty " + std::to_string(m.difficulty) + " outside [1, " +
                          std::to_string(schema.difficulty_levels) + "]");
  }
  enc.difficulty_index = m.difficulty - 1;
  enc.difficulty = Vec::Zero(schema.difficulty_levels);
  enc.difficulty[enc.difficulty_index] = 1.0;
  if (m.knowledge_concepts.empty()) throw ValidationError("no knowledge concepts");
  enc.concepts = Vec::Zero(schema.n_concepts);
  const double w = 1.0 / static_cast<double>(m.knowledge_concepts.size());
  for (int c : m.knowledge_concepts) {
    if (c < 0 || c >= schema.n_concepts) throw ValidationError("unknown concept id " + std::to_string(c));
    enc.concepts[c] = w;
  }
  return enc;
}

}  // namespace fse
