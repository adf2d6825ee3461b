#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace egopose {

/// Ordered `key = value` text document used for manifests, calibration,
/// configuration and reports. Lines starting with '#' are comments; array
/// values are whitespace-separated. Keys are unique.
class KvDocument {
 public:
  static KvDocument parse(std::string_view text, std::string source = "<memory>");
  static KvDocument load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;
  std::string serialize() const;

  bool contains(std::string_view key) const;
  const std::string& source() const { return source_; }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void set(std::string_view key, std::string value);
  void set(std::string_view key, double value);
  void set(std::string_view key, long long value);
  void set(std::string_view key, int value) { set(key, static_cast<long long>(value)); }
  void set(std::string_view key, bool value) { set(key, std::string(value ? "true" : "false")); }
  void set(std::string_view key, std::span<const double> values);
  void set(std::string_view key, const char* value) { set(key, std::string(value)); }
  void add_comment(std::string text);

  // Getters throw ValidationError naming the source and key.
  const std::string& get_string(std::string_view key) const;
  double get_double(std::string_view key) const;
  long long get_int(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key, std::size_t expected) const;

 private:
  std::string source_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<std::string> comments_;
};

// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);
double parse_double(std::string_view text, std::string_view context);
long long parse_int(std::string_view text, std::string_view context);

}  // namespace egopose
