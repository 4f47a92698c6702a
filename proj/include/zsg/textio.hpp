#pragma once

#include <charconv>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "zsg/errors.hpp"

namespace zsg::text {

// Shortest decimal that parses back to the identical double.
inline void append_double(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw NumericError("cannot format value");
  out.append(buf, end);
}

inline std::string format_double(double v) {
  std::string s;
  append_double(s, v);
  return s;
}

inline std::string join_doubles(std::span<const double> values, char sep = ' ') {
  std::string s;
  s.reserve(values.size() * 20);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s.push_back(sep);
    append_double(s, values[i]);
  }
  return s;
}

inline bool try_parse_double(std::string_view token, double& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc{} && ptr == token.data() + token.size();
}

inline double parse_double(std::string_view token, std::string_view context) {
  double v = 0.0;
  if (!try_parse_double(token, v)) {
    throw DataError("non-numeric token '" + std::string(token) + "' in " + std::string(context));
  }
  return v;
}

inline bool try_parse_size(std::string_view token, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc{} && ptr == token.data() + token.size() && !token.empty();
}

inline std::size_t parse_size(std::string_view token, std::string_view context) {
  std::size_t v = 0;
  if (!try_parse_size(token, v)) {
    throw DataError("expected a non-negative integer, got '" + std::string(token) + "' in " +
                    std::string(context));
  }
  return v;
}

inline std::string_view strip_cr(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

// Splits on runs of spaces and tabs.
inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

// Splits on every occurrence of sep (empty fields kept).
inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace zsg::text
