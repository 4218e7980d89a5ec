#pragma once

#include <stdexcept>
#include <string>

namespace tarmac {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required column is missing or a file header is unusable. Fatal for the file.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A single field could not be parsed. Row parsers turn this into a diagnostic.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or pipeline setting.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (e.g. non-increasing timestamps).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace tarmac
