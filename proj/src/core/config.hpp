#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pdistill {

// Flat `key=value` text with `#` comments. Used for config files, CLI
// overrides and the config blob stored in checkpoints.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::filesystem::path& path);

  std::string serialize() const;

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  // Later entries win.
  void merge(const KeyValues& overrides);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::vector<std::size_t> get_size_list(const std::string& key,
                                         const std::vector<std::size_t>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

std::string join_sizes(const std::vector<std::size_t>& values);
// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace pdistill
