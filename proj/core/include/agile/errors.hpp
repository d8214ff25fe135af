#pragma once

#include <stdexcept>
#include <string>

namespace agile {

// Shapes that cannot be combined by an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Class or task index outside its valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation called in an order the object's lifecycle does not allow.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class EmptyBufferError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data failed validation (e.g. non-normalized probabilities).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Metric requested on inputs for which it is not defined.
class UndefinedError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed configuration. `line` is 0 when the problem is not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, int line, const std::string& message)
      : std::runtime_error(format(source, line, message)), source_(std::move(source)), line_(line) {}

  [[nodiscard]] const std::string& source() const noexcept { return source_; }
  [[nodiscard]] int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& source, int line, const std::string& message) {
    if (line > 0) return source + ":" + std::to_string(line) + ": " + message;
    return source + ": " + message;
  }

  std::string source_;
  int line_;
};

}  // namespace agile
