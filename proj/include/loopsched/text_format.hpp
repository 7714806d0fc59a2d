#pragma once

#include <charconv>
#include <cstddef>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "errors.hpp"

namespace loopsched {

// Shortest decimal text that parses back to the identical double.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::string_view trim(std::string_view s) noexcept {
  constexpr std::string_view ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::string_view strip_comment(std::string_view s) noexcept {
  const auto hash = s.find('#');
  return hash == std::string_view::npos ? s : s.substr(0, hash);
}

inline double parse_double(std::string_view text, std::string_view what, std::size_t line = 0) {
  text = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError("invalid number '" + std::string(text) + "' for " + std::string(what), line);
  }
  return v;
}

inline std::uint64_t parse_count(std::string_view text, std::string_view what,
                                 std::size_t line = 0) {
  text = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError("invalid count '" + std::string(text) + "' for " + std::string(what), line);
  }
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.emplace_back(trim(s.substr(pos, next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

struct KeyValue {
  std::string value;
  std::size_t line{0};
};

// `key = value` lines, '#' starts a comment, blank lines ignored, duplicate keys rejected.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in) {
    KeyValueFile out;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
      ++line;
      const auto body = trim(strip_comment(raw));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line);
      std::string key{trim(body.substr(0, eq))};
      if (key.empty()) throw ParseError("empty key", line);
      if (out._entries.count(key)) throw ParseError("duplicate key '" + key + "'", line);
      out._entries.emplace(std::move(key), KeyValue{std::string(trim(body.substr(eq + 1))), line});
    }
    return out;
  }

  bool has(const std::string& key) const { return _entries.count(key) != 0; }

  const KeyValue& get(const std::string& key) const {
    auto it = _entries.find(key);
    if (it == _entries.end()) throw ParseError("missing required key '" + key + "'");
    return it->second;
  }

  double number(const std::string& key) const {
    const auto& kv = get(key);
    return parse_double(kv.value, key, kv.line);
  }

  std::vector<std::string> list(const std::string& key) const { return split(get(key).value, ','); }

  const std::map<std::string, KeyValue>& entries() const noexcept { return _entries; }

 private:
  std::map<std::string, KeyValue> _entries;
};

}  // namespace loopsched
