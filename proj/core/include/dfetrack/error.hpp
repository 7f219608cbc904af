#pragma once

#include <stdexcept>
#include <string>

namespace dfetrack {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments: wrong channel count, mismatched dimensions, empty
// inputs, out-of-range probabilities.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A window or neighbourhood does not fit inside an image or landscape.
class BorderError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// An operation was called on a value that does not satisfy its contract,
// e.g. asking for the minimum of a surface that has none.
class PreconditionError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Tensor or parameter shapes disagree with the model configuration.
class ShapeError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Non-finite values appeared during a numeric procedure.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File-system or codec failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// A persisted file has the wrong magic, version, or is truncated.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace dfetrack
