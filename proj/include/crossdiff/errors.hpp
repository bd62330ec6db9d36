#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crossdiff {

enum class ErrorCategory {
  kParse,
  kValidation,
  kConfig,
  kState,
  kDependency,
  kDegenerateSplit,
  kIo,
};

std::string_view category_name(ErrorCategory category);

/// Base for every error raised by the library. The category drives the CLI
/// exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, size_t line, const std::string& what)
      : Error(ErrorCategory::kParse,
              source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error(ErrorCategory::kValidation, message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorCategory::kConfig, message) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& message)
      : Error(ErrorCategory::kState, message) {}
};

class DependencyError : public Error {
 public:
  DependencyError(const std::string& missing, const std::string& producer)
      : Error(ErrorCategory::kDependency,
              "missing " + missing + "; run `" + producer + "` first") {}
};

class DegenerateSplitError : public Error {
 public:
  explicit DegenerateSplitError(const std::string& message)
      : Error(ErrorCategory::kDegenerateSplit, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message)
      : Error(ErrorCategory::kIo, message) {}
};

}  // namespace crossdiff
