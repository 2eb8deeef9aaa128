#pragma once

#include <stdexcept>
#include <string>

namespace rwta {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand dimensions do not line up; message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// A caller supplied an invalid configuration (even kernel with same
// padding, unknown mode string, bad window/stride combination, ...).
struct ConfigError : Error {
  using Error::Error;
};

// An API precondition was violated (empty sequence, non-scalar loss, ...).
struct ContractError : Error {
  using Error::Error;
};

// A file on disk is not what it claims to be.
struct FormatError : Error {
  using Error::Error;
};

// Bad values inside otherwise well-formed data (labels out of range,
// non-finite pixels, ...).
struct DataError : Error {
  using Error::Error;
};

// The training loop hit a non-recoverable numeric condition.
struct TrainError : Error {
  using Error::Error;
};

// A closure handed to the gradient checker produced a non-finite loss.
struct EvalError : Error {
  using Error::Error;
};

}  // namespace rwta
