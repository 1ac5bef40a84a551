#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reslm/common.hpp"

namespace reslm {

/// Flat "key = value" experiment configuration with dotted section names,
/// '#' comment lines, and canonical (sorted) serialization so two runs can
/// be diffed and hashed. Flags override file values one-to-one by key.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Comma-separated list value.
  std::vector<std::string> get_list(const std::string& key) const;

  /// Sorted "key = value" lines.
  std::string canonical() const;
  /// FNV-1a hex digest of canonical().
  std::string hash_hex() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace reslm
