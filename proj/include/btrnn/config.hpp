// SPDX-License-Identifier: Apache-2.0
#pragma once

// Flat key=value configuration files.
//
//   # comment
//   d = 2
//   R = 4
//   input_dims = 8,8
//
// One assignment per line; surrounding whitespace is ignored; '#' starts a
// comment anywhere on a line. Keys are case-sensitive. A key may appear only
// once. Every key must be consumed by the typed reader, otherwise
// `reject_unknown` reports the first leftover key with its line number.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "btrnn/errors.hpp"

namespace btrnn {

class ConfigNotFound : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }

  // Typed getters return the default when the key is absent and mark the key
  // consumed when present. Malformed values raise ConfigError with the line.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated sizes. "a-b" expands to the inclusive range.
  std::vector<std::size_t> get_size_list(const std::string& key, const std::vector<std::size_t>& fallback) const;

  /// Optional variant: nullopt when absent.
  std::optional<std::vector<std::size_t>> find_size_list(const std::string& key) const;

  /// Line of `key`, or 0 if absent.
  std::size_t line_of(const std::string& key) const;

  void reject_unknown() const;

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
    mutable bool used = false;
  };
  const Entry* find(const std::string& key) const;

  std::map<std::string, Entry> entries_;
};

}  // namespace btrnn
