#pragma once

#include <stdexcept>
#include <string>

namespace corpusforge {

// Base for every error the toolkit raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input failed a documented precondition (bad argument, schema violation).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A file or stream could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace corpusforge
