#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fse/common.hpp"
#include "fse/corpus.hpp"
#include "fse/formula.hpp"

namespace fse {

using StopWords = std::unordered_set<std::string>;

// Strips HTML tags and <style>/<script> blocks outside $...$ formulas, drops
// stop words (case-insensitive), collapses whitespace. Never lengthens text.
std::string clean_text(std::string_view raw, const StopWords& stop_words = {});

// clean_text, then every $...$ span replaced by its canonical formula.
std::string normalize_text(std::string_view raw, const StopWords& stop_words = {});

// Lower-cased word/number/symbol tokens of already-normalised text. Prose
// punctuation (, . ; : ! ? quotes) is dropped; math symbols are kept.
std::vector<std::string> split_tokens(std::string_view normalized);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSep = 2;
  static constexpr int kReserved = 3;

  Vocab();

  // Frequency-descending, ties by token; tokens rarer than min_count dropped.
  static Vocab build(const std::vector<std::vector<std::string>>& documents, int min_count = 1);

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  // One token per line; line i holds id i + kReserved.
  std::string serialize() const;
  static Vocab deserialize(std::string_view text);
  void save(const std::string& path) const { write_file(path, serialize()); }
  static Vocab load(const std::string& path) { return deserialize(read_file(path)); }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct TokenSequence {
  std::vector<int> ids;
  bool empty() const { return ids.empty(); }
  std::size_t size() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

TokenSequence tokenize(std::string_view text, const Vocab& vocab, const StopWords& stop_words = {});
std::vector<std::string> detokenize(const TokenSequence& seq, const Vocab& vocab);

// The two textual views of an exercise used throughout: stem + options, and
// answer + analysis.
std::string stem_side(const Exercise& e);
std::string analysis_side(const Exercise& e);

Vocab build_vocab(const Corpus& corpus, const StopWords& stop_words = {}, int min_count = 1);

struct MetadataEncoding {
  Vec type;        // one-hot over schema.types
  Vec difficulty;  // one-hot, slot difficulty - 1
  Vec concepts;    // 1/n at each of the n concept slots
  int type_index = 0;
  int difficulty_index = 0;
};

MetadataEncoding encode_metadata(const Metadata& m, const MetadataSchema& schema);

}  // namespace fse
