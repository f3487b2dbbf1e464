// SPDX-License-Identifier: Apache-2.0
#include "btrnn/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace btrnn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  s = trim(s);
  Int value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key=value", line_no);
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line_no);
    if (value.empty()) throw ConfigError("empty value for '" + std::string(key) + "'", line_no);
    const auto [it, inserted] = cfg.entries_.emplace(std::string(key), Entry{std::string(value), line_no});
    if (!inserted) {
      throw ConfigError("duplicate key '" + std::string(key) + "' (first set on line " +
                            std::to_string(it->second.line) + ")",
                        line_no);
    }
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigNotFound("cannot open config file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

const KeyValueConfig::Entry* KeyValueConfig::find(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  it->second.used = true;
  return &it->second;
}

std::size_t KeyValueConfig::line_of(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto* e = find(key);
  return e ? e->value : fallback;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  const auto* e = find(key);
  if (!e) return fallback;
  const auto v = parse_int<std::size_t>(e->value);
  if (!v) throw ConfigError("'" + key + "' expects a non-negative integer, got '" + e->value + "'", e->line);
  return *v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto* e = find(key);
  if (!e) return fallback;
  const auto v = parse_int<std::uint64_t>(e->value);
  if (!v) throw ConfigError("'" + key + "' expects an unsigned 64-bit integer, got '" + e->value + "'", e->line);
  return *v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto* e = find(key);
  if (!e) return fallback;
  std::size_t consumed = 0;
  double v = 0.0;
  try {
    v = std::stod(e->value, &consumed);
  } catch (const std::exception&) {
    consumed = 0;
  }
  if (consumed != e->value.size()) {
    throw ConfigError("'" + key + "' expects a real number, got '" + e->value + "'", e->line);
  }
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto* e = find(key);
  if (!e) return fallback;
  std::string v = e->value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects a boolean, got '" + e->value + "'", e->line);
}

std::optional<std::vector<std::size_t>> KeyValueConfig::find_size_list(const std::string& key) const {
  const auto* e = find(key);
  if (!e) return std::nullopt;
  std::vector<std::size_t> out;
  std::string_view rest = e->value;
  while (true) {
    const auto comma = rest.find(',');
    const auto item = trim(rest.substr(0, comma));
    const auto dash = item.find('-');
    if (dash != std::string_view::npos && dash > 0) {
      const auto lo = parse_int<std::size_t>(item.substr(0, dash));
      const auto hi = parse_int<std::size_t>(item.substr(dash + 1));
      if (!lo || !hi || *lo > *hi) {
        throw ConfigError("'" + key + "' has a malformed range '" + std::string(item) + "'", e->line);
      }
      for (auto v = *lo; v <= *hi; ++v) out.push_back(v);
    } else {
      const auto v = parse_int<std::size_t>(item);
      if (!v) throw ConfigError("'" + key + "' expects a list of integers, got '" + e->value + "'", e->line);
      out.push_back(*v);
    }
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::vector<std::size_t> KeyValueConfig::get_size_list(const std::string& key,
                                                       const std::vector<std::size_t>& fallback) const {
  auto v = find_size_list(key);
  return v ? *v : fallback;
}

void KeyValueConfig::reject_unknown() const {
  const Entry* first = nullptr;
  std::string first_key;
  for (const auto& [key, e] : entries_) {
    if (!e.used && (!first || e.line < first->line)) {
      first = &e;
      first_key = key;
    }
  }
  if (first) throw ConfigError("unknown key '" + first_key + "'", first->line);
}

}  // namespace btrnn
