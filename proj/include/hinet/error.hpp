#pragma once

#include <stdexcept>
#include <string>

namespace hinet {

// Failure classes. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  Validation = 1,
  Io = 2,
  Numeric = 3,
  MalformedInput = 4,
  PropertyViolation = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

// An error anchored to a 1-based line of some text input.
class ParseError : public Error {
 public:
  ParseError(ErrorKind kind, std::size_t line, const std::string& message)
      : Error(kind, "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace hinet
