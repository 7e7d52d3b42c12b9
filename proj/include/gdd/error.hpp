#pragma once

#include <stdexcept>
#include <string>

namespace gdd {

/// Bad argument shape, range or format.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A normalization or factorization hit a non-positive pivot.
class DegenerateMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values appeared during a numeric computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by unrolled CG when an iterate stops being finite.
class NumericDivergence : public NumericError {
 public:
  NumericDivergence(const std::string& what, int iteration)
      : NumericError(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gdd
