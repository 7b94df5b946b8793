#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rmipn {

// Base class for all domain errors. The CLI maps these to exit code 1;
// command-line usage problems exit with 2 instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

// Raised when an operation produces or receives non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File-format violation with the byte offset where it was detected.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Inward polygon offset that degenerated; carries the attempted distance.
class CollapseError : public Error {
 public:
  CollapseError(double attempted_d, const std::string& what)
      : Error(what), attempted_d_(attempted_d) {}
  double attempted_d() const { return attempted_d_; }

 private:
  double attempted_d_;
};

}  // namespace rmipn
