#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace synthpqa {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record. `line()` is 1-based; 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a data invariant (duplicate ids, dangling
/// references, out-of-range parameters).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// I/O failure on a path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace synthpqa
