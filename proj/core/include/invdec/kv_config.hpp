#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace invdec::config {

/// Flat `key = value` text with `[section]` headers. Keys are stored
/// qualified as `section.key`; keys before the first header are unqualified.
/// `#` and `;` start comment lines.
class KvConfig {
 public:
  /// Throws ParseError with `source` and the line number on malformed input.
  static KvConfig parse(std::string_view text, const std::string& source = "<text>");
  /// Throws IoError when the file cannot be read.
  static KvConfig load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  /// Applies `section.key=value`; throws UsageError when '=' or the key is missing.
  void apply_override(std::string_view assignment);
  bool erase(const std::string& key);

  std::optional<std::string> get(const std::string& key) const;
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::vector<std::string> keys() const;
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

  /// Canonical text: unqualified keys first, then sections in sorted order,
  /// keys sorted within each. parse(to_text()) reproduces the entries.
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> entries_;
};

std::string trim(std::string_view s);

}  // namespace invdec::config
