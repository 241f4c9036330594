#pragma once

#include <stdexcept>
#include <string>

namespace panogan {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor rank/size disagreement between arguments.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid user configuration or missing required inputs.
struct ConfigError : Error {
  using Error::Error;
};

// Dataset on disk is inconsistent (missing partners, empty split).
struct IntegrityError : Error {
  using Error::Error;
};

// NaN/Inf reached a place where it must not be silently absorbed.
struct NumericError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace panogan
