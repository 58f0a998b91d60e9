#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace occupred {

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable identifier (used in CLI error JSON).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error("ParseError", source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  SchemaError(const std::string& source, std::size_t line, const std::string& what)
      : Error("SchemaError", source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("IoError", what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("InvalidArgument", what) {}
};

/// Two per-user inputs that must cover the same users do not.
class UserSetMismatch : public Error {
 public:
  explicit UserSetMismatch(const std::string& what) : Error("UserSetMismatch", what) {}
};

}  // namespace occupred
