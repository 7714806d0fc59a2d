#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace loopsched {

// Malformed input file. line() is 1-based, 0 when the error is not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        _line{line} {}

  std::size_t line() const noexcept { return _line; }

 private:
  std::size_t _line;
};

// A repeatable measurement returned a non-positive duration.
class MeasurementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace loopsched
