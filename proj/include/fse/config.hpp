#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fse/common.hpp"

namespace fse {

// Flat key = value configuration. Every known key has a default; files and
// overrides may only set known keys. Lines starting with '#' are comments.
class Config {
 public:
  Config();

  static Config parse(std::string_view text);  // throws ParseError / ConfigError
  static Config load(const std::string& path);

  // Sets a known key; "seed" sets every per-stage seed at once.
  void set(const std::string& key, const std::string& value);
  // "key=value"
  void assign(std::string_view assignment);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma-separated, trimmed, empties dropped
  std::vector<double> get_doubles(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // Sorted "key=value\n" lines of the keys that affect results (threads,
  // cache.* and service.* excluded); hash() is its hex FNV-1a.
  std::string canonical() const;
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fse
