// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace nf {

// Flat typed key-value configuration.
//
// Grammar, one entry per line:
//
//   # comment
//   section.key = value
//
// Keys are dotted identifiers; values run to the end of the line (a trailing
// `# comment` is stripped). Duplicate keys are an error. Serialization is
// canonical: keys sorted, one `key = value` per line.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const;
  void set(const std::string& key, std::string value);
  void erase(const std::string& key);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, std::string fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Entries whose key starts with `prefix` + ".", with the prefix stripped.
  KeyValueConfig section(const std::string& prefix) const;
  void merge(const KeyValueConfig& other);

  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> entries_;
};

std::string format_double(double v);

}  // namespace nf
