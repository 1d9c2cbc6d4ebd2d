#pragma once

#include <stdexcept>
#include <string>

namespace ffloor {

// Base of every error the library raises. Subclasses let the CLI map
// failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid training/plotting configuration, detected before any work starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (missing values, ragged rows, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Query rows that do not match a model schema, including unseen levels.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Model/bundle files that fail to parse, carry a foreign version or a bad
// checksum.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Numerical degeneracy: all-zero class counts, constant kernel context, ...
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace ffloor
