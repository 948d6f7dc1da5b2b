#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lbd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments: bad dimensions, out-of-range hyperparameters, schema
/// violations.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. `line()` is 1-based.
class ParseError : public InputError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::ptrdiff_t index)
      : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}

  std::ptrdiff_t index() const { return index_; }

 private:
  std::ptrdiff_t index_;
};

}  // namespace lbd
