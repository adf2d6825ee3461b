#pragma once

#include <stdexcept>
#include <string>

namespace egopose {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, unreadable, unwritable or truncated files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Inputs that violate a shape, range or format contract.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Singular or degenerate numerical configurations.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace egopose
