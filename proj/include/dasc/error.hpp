#pragma once

#include <stdexcept>
#include <string>

namespace dasc {

/// Base for all library errors. `exit_code()` maps onto the CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

/// Invalid configuration, bad arguments, contract violations on parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

/// Unreadable or malformed data, missing artifacts, empty masks.
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

/// NaN/Inf encountered during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

/// Tensor shape or layout mismatch.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace dasc
