#pragma once

#include <stdexcept>
#include <string>

namespace pathbench {

/// Base of every error raised by the harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shape mismatch, bad index, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, singular systems and similar numerical failures.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A task, registry or split definition cannot be satisfied by the data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures. The message always carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input (CSV manifests, fixtures, JSON documents).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Bad command-line usage or an unknown option value (report format, verb).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace pathbench
