#pragma once

// Minimal TOML-style configuration: `key = value` lines, optional
// `[section]` headers (keys become `section.key`), `#` comments, values
// that are numbers, booleans, quoted strings or flat `[a, b, c]` arrays.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tailicp/errors.hpp"

namespace tailicp {

class Config {
 public:
  struct Entry {
    std::vector<std::string> items;  // one item for scalars
    bool is_array = false;
    std::size_t line = 0;
  };

  static Config parse(const std::string& text, const std::string& source = "<config>") {
    Config c;
    c.source_ = source;
    std::istringstream in(text);
    std::string raw, section;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
      ++lineno;
      const std::string line = trim(strip_comment(raw));
      if (line.empty()) continue;
      if (line.front() == '[' && line.find('=') == std::string::npos) {
        if (line.back() != ']') throw ParseError(source, lineno, "unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ParseError(source, lineno, "empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(source, lineno, "expected 'key = value'");
      std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ParseError(source, lineno, "missing key");
      for (char ch : key)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.'))
          throw ParseError(source, lineno, "invalid character in key '" + key + "'");
      if (!section.empty()) key = section + "." + key;
      if (c.entries_.count(key)) throw ParseError(source, lineno, "duplicate key '" + key + "'");
      if (value.empty()) throw ParseError(source, lineno, "missing value for '" + key + "'");
      Entry e;
      e.line = lineno;
      if (value.front() == '[') {
        if (value.back() != ']') throw ParseError(source, lineno, "unterminated array for '" + key + "'");
        e.is_array = true;
        const std::string body = trim(value.substr(1, value.size() - 2));
        if (!body.empty()) {
          std::istringstream items(body);
          std::string item;
          while (std::getline(items, item, ',')) {
            item = trim(item);
            if (item.empty()) throw ParseError(source, lineno, "empty array element in '" + key + "'");
            e.items.push_back(unquote(item, source, lineno));
          }
        }
      } else {
        e.items.push_back(unquote(value, source, lineno));
      }
      c.entries_[key] = std::move(e);
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::string& source() const noexcept { return source_; }
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto* e = scalar(key);
    return e ? e->items.front() : fallback;
  }
  double get_double(const std::string& key, double fallback) const {
    const auto* e = scalar(key);
    return e ? to_double(key, e->items.front(), e->line) : fallback;
  }
  long get_long(const std::string& key, long fallback) const {
    const auto* e = scalar(key);
    return e ? to_long(key, e->items.front(), e->line) : fallback;
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto* e = scalar(key);
    if (!e) return fallback;
    std::uint64_t v = 0;
    const auto& s = e->items.front();
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ParseError(source_, e->line, "key '" + key + "': expected a non-negative integer, got '" + s + "'");
    return v;
  }
  bool get_bool(const std::string& key, bool fallback) const {
    const auto* e = scalar(key);
    if (!e) return fallback;
    if (e->items.front() == "true") return true;
    if (e->items.front() == "false") return false;
    throw ParseError(source_, e->line, "key '" + key + "': expected true or false");
  }
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<double> out;
    for (const auto& s : it->second.items) out.push_back(to_double(key, s, it->second.line));
    return out;
  }
  std::vector<long> get_longs(const std::string& key, std::vector<long> fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<long> out;
    for (const auto& s : it->second.items) out.push_back(to_long(key, s, it->second.line));
    return out;
  }

  // Throws naming the first key not in `known`.
  void require_known(const std::set<std::string>& known) const {
    for (const auto& [k, e] : entries_)
      if (!known.count(k)) throw ParseError(source_, e.line, "unknown key '" + k + "'");
  }

  std::size_t line_of(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }
  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }
  static std::string unquote(const std::string& s, const std::string& source, std::size_t line) {
    if (s.front() != '"') return s;
    if (s.size() < 2 || s.back() != '"') throw ParseError(source, line, "unterminated string");
    return s.substr(1, s.size() - 2);
  }
  const Entry* scalar(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    if (it->second.is_array) throw ParseError(source_, it->second.line, "key '" + key + "' must be a scalar");
    return &it->second;
  }
  double to_double(const std::string& key, const std::string& s, std::size_t line) const {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ParseError(source_, line, "key '" + key + "': expected a number, got '" + s + "'");
    return v;
  }
  long to_long(const std::string& key, const std::string& s, std::size_t line) const {
    long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ParseError(source_, line, "key '" + key + "': expected an integer, got '" + s + "'");
    return v;
  }

  std::string source_;
  std::map<std::string, Entry> entries_;
};

}  // namespace tailicp
