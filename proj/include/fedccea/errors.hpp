#pragma once

#include <stdexcept>
#include <string>

namespace fedccea {

// Base of every library error. Callers that only need a diagnostic can
// catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

// Requested local data size exceeds what the client holds.
class SizeError : public Error {
 public:
  using Error::Error;
};

// FedAvg called with an all-zero size vector.
class DegenerateRoundError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DependencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedccea
