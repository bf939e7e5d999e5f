#pragma once

#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace maevi {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plain-text `key = value` configuration. `#` starts a comment. A key may
/// repeat (e.g. one `shape` line per object); get_all() returns every value
/// in file order, the scalar getters the last one.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::filesystem::path& path);
  static KeyValueConfig from_string(const std::string& text, const std::string& origin = "<string>");

  /// Replaces every existing value of `key`.
  void set(const std::string& key, const std::string& value);
  /// Applies a `key=value` override token.
  void apply_override(const std::string& token);
  /// Values of `other` replace the same keys here.
  void merge(const KeyValueConfig& other);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_all(const std::string& key) const;

  /// Throws ConfigError naming the first key not in `known`.
  void require_known(const std::set<std::string>& known, const std::string& context) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string dump() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace maevi
