#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace srtkit {

/// Invalid configuration (bad key, out-of-range constant, unreadable table).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problem with input data: empty file, malformed row, missing columns.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A numerical procedure could not produce a result (degenerate fit, flat SII curve).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace srtkit
