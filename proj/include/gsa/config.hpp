#pragma once

// Flat "key = value" text used for every spec, config, grid and manifest
// file. '#' starts a comment; blank lines are ignored. Keys are consumed
// with take_*(); finish() rejects anything left unconsumed so a typo in a
// hyperparameter name is an error rather than a silently ignored line.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gsa {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse(std::string_view text, std::string source);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  const std::string& source() const { return source_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }

  std::optional<std::string> take(std::string_view key);
  std::string take_string(std::string_view key);
  std::string take_string(std::string_view key, std::string fallback);
  long take_int(std::string_view key);
  long take_int(std::string_view key, long fallback);
  double take_real(std::string_view key);
  double take_real(std::string_view key, double fallback);
  bool take_bool(std::string_view key, bool fallback);

  void finish() const;

  // Entries in file order.
  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

 private:
  std::string missing(std::string_view key) const;
  [[noreturn]] void bad_value(std::string_view key, const std::string& value,
                              const char* expected) const;

  std::string source_;
  std::filesystem::path base_dir_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::string, std::less<>> values_;
  std::map<std::string, bool, std::less<>> consumed_;
};

std::string format_key_values(
    const std::vector<std::pair<std::string, std::string>>& entries);

// Comma-separated list helpers.
std::vector<std::string> split_list(std::string_view text, char sep = ',');
std::vector<long> parse_int_list(std::string_view text, const std::string& what);
std::vector<double> parse_real_list(std::string_view text, const std::string& what);

// Shortest decimal text that parses back to the same double.
std::string format_real(double v);

}  // namespace gsa
