#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>
#include <string>
#include <string_view>

namespace loopsched {

enum class Technique { STATIC, SS, GSS, FAC };

inline constexpr std::array<Technique, 4> all_techniques{Technique::STATIC, Technique::SS,
                                                         Technique::GSS, Technique::FAC};

constexpr std::string_view to_string(Technique t) noexcept {
  switch (t) {
    case Technique::STATIC: return "STATIC";
    case Technique::SS: return "SS";
    case Technique::GSS: return "GSS";
    case Technique::FAC: return "FAC";
  }
  return "?";
}

constexpr std::size_t index_of(Technique t) noexcept { return static_cast<std::size_t>(t); }

// Case-insensitive.
inline Technique parse_technique(std::string_view text) {
  std::string up(text);
  std::transform(up.begin(), up.end(), up.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (auto t : all_techniques) {
    if (up == to_string(t)) return t;
  }
  throw std::invalid_argument("unknown scheduling technique '" + std::string(text) + "'");
}

}  // namespace loopsched
