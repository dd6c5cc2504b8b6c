#pragma once

#include <stdexcept>
#include <string>

namespace gleason {

// Tensor shape or axis mismatch inside a kernel.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid model or pipeline configuration (odd channel counts, indivisible sizes...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user-supplied data: malformed CSV rows, unknown labels, missing files.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gleason
