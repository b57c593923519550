#pragma once

#include <stdexcept>
#include <string>

namespace metacot {

/// Base class for all domain errors raised by the toolkit. The CLI maps
/// these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Malformed resource, config, or input file.
class FormatError : public Error {
 public:
  FormatError(std::string source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)),
        line_(line) {}
  explicit FormatError(const std::string& what) : Error(what) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_ = 0;
};

/// A statistic is mathematically undefined for the given input (constant
/// series, zero entropy denominator, ...). Reported rather than defaulted.
class UndefinedError : public Error {
 public:
  using Error::Error;
};

}  // namespace metacot
