#pragma once

#include <stdexcept>
#include <string>

namespace styleswap {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents or channel counts that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration value outside its documented domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or unsupported file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Missing files, empty pools and other input problems.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient became NaN/Inf.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace styleswap
