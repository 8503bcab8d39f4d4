#pragma once

#include <stdexcept>
#include <string>

namespace invdec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or incompatible settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A value could not be parsed (carries row/column context in the message).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Structurally malformed input (ragged CSV rows, corrupt checkpoint, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward() on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value surfaced during training or evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace invdec
