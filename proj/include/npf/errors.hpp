#pragma once

#include <stdexcept>
#include <string>

namespace npf {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularProfile : public Error {
 public:
  using Error::Error;
};

class BadSpec : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class Diverged : public Error {
 public:
  using Error::Error;
};

class BadConfig : public Error {
 public:
  using Error::Error;
};

class DegenerateSequence : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace npf
