#pragma once

// Minimal delimited-text helpers: RFC 4180 style quoting on a single line,
// locale-independent number conversion, header lookup.

#include <charconv>
#include <cmath>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tarmac/error.hpp"

namespace tarmac::csv {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view line, char delimiter = ',') {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && trim(field).empty()) {
      field.clear();
      in_quotes = true;
      was_quoted = true;
    } else if (c == delimiter) {
      fields.push_back(was_quoted ? field : std::string(trim(field)));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field");
  fields.push_back(was_quoted ? field : std::string(trim(field)));
  return fields;
}

inline std::string quote(std::string_view value, char delimiter = ',') {
  const bool needs = value.find(delimiter) != std::string_view::npos ||
                     value.find('"') != std::string_view::npos ||
                     (!value.empty() && (value.front() == ' ' || value.back() == ' '));
  if (!needs) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline double parse_double(std::string_view text, std::string_view field = "value") {
  const std::string_view s = trim(text);
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (s.empty() || ec != std::errc{} || ptr != last || !std::isfinite(value)) {
    throw ParseError("non-numeric " + std::string(field) + " '" + std::string(s) + "'");
  }
  return value;
}

inline long long parse_int(std::string_view text, std::string_view field = "value") {
  const std::string_view s = trim(text);
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError("non-integer " + std::string(field) + " '" + std::string(s) + "'");
  }
  return value;
}

/// Shortest representation that round-trips exactly.
inline std::string format_double(double value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  (void)ec;
  return std::string(buf, ptr);
}

/// Reads lines, strips CR and a leading UTF-8 BOM, tracks physical line numbers.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {
    if (!in_.good()) throw IoError("unreadable input stream");
  }

  bool next(std::string& line) {
    if (!std::getline(in_, line)) {
      if (in_.bad()) throw IoError("read failure at line " + std::to_string(line_no_ + 1));
      return false;
    }
    ++line_no_;
    if (line_no_ == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  /// Next line that is not blank.
  bool next_nonblank(std::string& line) {
    while (next(line)) {
      if (!trim(line).empty()) return true;
    }
    return false;
  }

  std::size_t line_number() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

class Header {
 public:
  Header() = default;
  explicit Header(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i);
  }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require(const std::string& name) const {
    auto idx = find(name);
    if (!idx) throw SchemaError("missing required column '" + name + "'");
    return *idx;
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace tarmac::csv
