#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace occaug {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shape or argument-shape mismatch. The message names the offending
/// dimension.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value outside its documented domain (probabilities, sizes, indices).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in a state that does not support it, e.g. reading a
/// gradient before backward or running batch norm in eval mode before any
/// statistics were collected.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (non-finite loss) during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Configuration rejected by validation. Carries every violation found, not
/// just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);

  const std::vector<std::string>& violations() const noexcept {
    return violations_;
  }

 private:
  std::vector<std::string> violations_;
};

}  // namespace occaug
