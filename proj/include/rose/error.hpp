#pragma once

#include <stdexcept>
#include <string>

namespace rose {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A sequence is too short (or too long) for the requested operation.
class LengthError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Silent signals and other inputs for which a power ratio is undefined.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace rose
