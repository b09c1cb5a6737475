#pragma once

#include <stdexcept>
#include <string>

namespace sparseoc {

/// Invalid input: bad configuration, violated precondition, malformed index set.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Numerical breakdown: overflow in the coefficient, zero pivot, failed eigen-solve.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sparseoc
