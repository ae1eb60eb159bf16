#pragma once

#include <stdexcept>
#include <string>

namespace dualformer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Extents that do not line up: mismatched inner dimensions, non-divisible
/// windows, wrong channel counts.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: unknown preset, heads not dividing the width, bad
/// pyramid scale.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf showed up where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (tensor containers, manifests, config files).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace dualformer
