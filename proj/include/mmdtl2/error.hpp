#pragma once

#include <stdexcept>
#include <string>

namespace mmdtl2 {

/// Base class for every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, invalid parameters, shape mismatches.
/// The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Raised by the CSV and model readers; carries the offending line number.
class ParseError : public InputError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A numerical procedure failed (factorization after maximum jitter, non-finite data).
/// The CLI maps these to exit code 1.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmdtl2
