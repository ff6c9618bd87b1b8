#pragma once

#include <stdexcept>
#include <string>

namespace fairac {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: bad config values, out-of-range fractions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent dataset files.
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses, empty groups in metrics and similar runtime failures.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairac
