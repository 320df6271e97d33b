#pragma once

#include <stdexcept>
#include <string>

namespace openviewer {

// Base of every error raised by the library. Subclasses let callers (and the
// CLI exit-code mapping) tell precondition failures from numeric trouble.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A parameter outside its mathematical domain (negative threshold, log of a
// non-positive entry, omega <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace openviewer
