#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Base class for everything this library throws on contract violations.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Mismatched vector/matrix shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Bad experiment configuration (unknown keys, out-of-range values, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Problems with dataset contents (malformed CSV rows, empty devices, singular designs).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required (e.g. updates entering aggregation).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Filesystem trouble (unreadable input, unwritable output).
class IoError : public Error {
 public:
  using Error::Error;
};

// Training blew up; carries where.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int round, int device)
      : Error(what), round(round), device(device) {}
  int round;
  int device;
};

}  // namespace fedsim
