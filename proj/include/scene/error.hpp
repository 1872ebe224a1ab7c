#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scene {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. line() is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Violated precondition or invariant on in-memory data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Counterfactual generation could not produce anything for an instance.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Undefined statistic (constant input to spearman, every instance excluded, ...).
class MetricError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

// Connection refused, timeout, or retries exhausted on transport failures.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

// Non-2xx response carrying {"error": ...}.
class RemoteError : public BackendError {
 public:
  RemoteError(int status, const std::string& what)
      : BackendError("HTTP " + std::to_string(status) + ": " + what), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

// Response that does not match the wire schema or breaks a type invariant.
class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

}  // namespace scene
