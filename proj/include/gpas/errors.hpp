#pragma once

#include <stdexcept>
#include <string>

namespace gpas {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
  public:
    using Error::Error;
};

/// Index outside a table or vocabulary.
class LookupError : public Error {
  public:
    using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
  public:
    using Error::Error;
};

/// Misuse of a computation trace (double backward, stale handle, ...).
class TraceError : public Error {
  public:
    using Error::Error;
};

/// The finite-difference oracle could not be trusted (f was not deterministic).
class OracleInvalidError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Malformed input text; carries the 1-based line number when known.
class ParseError : public Error {
  public:
    ParseError(const std::string &what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const { return line_; }

  private:
    std::size_t line_;
};

/// Well-formed input that violates the expected record layout.
class SchemaError : public Error {
  public:
    using Error::Error;
};

class UsageError : public Error {
  public:
    using Error::Error;
};

} // namespace gpas
