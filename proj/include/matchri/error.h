#pragma once

#include <stdexcept>
#include <string>

namespace matchri {

// Base of every error raised by the library. The subclasses map onto the
// CLI exit codes (usage = 2, data = 3, numeric = 4).
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration values.
class ConfigError : public Error {
  public:
    using Error::Error;
};

// Input data violates a sample contract (non-binary treatment, NaN, too few
// eligible controls, ...).
class DataError : public Error {
  public:
    using Error::Error;
};

// A numeric procedure cannot proceed (singular matrix, zero variance).
class NumericError : public Error {
  public:
    using Error::Error;
};

}  // namespace matchri
