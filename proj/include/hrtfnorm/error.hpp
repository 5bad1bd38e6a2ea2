#pragma once

#include <stdexcept>
#include <string>

namespace hrtfnorm {

// Base of every library error. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed container bytes (bad magic, truncated payload, bad header).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Data violates a documented invariant (non-finite sample, empty database...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Shapes of two inputs disagree (grid, positions, feature length).
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Iterative numerics failed: SMO did not converge, field training diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hrtfnorm
