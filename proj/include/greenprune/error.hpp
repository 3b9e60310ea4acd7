#pragma once

#include <stdexcept>
#include <string>

namespace greenprune {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: malformed files, bad options, violated preconditions.
/// The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Syntax error in an architecture document, with the 1-based line number.
class ParseError : public ConfigError {
 public:
  ParseError(int line, const std::string& what)
      : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Failure while running a computation (divergence, missing artifacts, I/O).
/// The CLI maps this to exit code 3.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace greenprune
