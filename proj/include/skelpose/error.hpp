#pragma once

#include <stdexcept>
#include <string>

namespace skelpose {

// Base for every error raised by the library; the CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid numeric domain: non-positive depth, scale, norm length, ...
class DomainError : public Error {
 public:
  using Error::Error;
};

// Tensor or container shape disagreement.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Violated operation precondition that is not a shape or domain problem.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; message names the offending field.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Any NaN/Inf produced inside a tensor op.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace skelpose
