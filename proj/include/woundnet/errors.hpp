#pragma once

#include <stdexcept>
#include <string>

namespace woundnet {

/// Tensor shapes that do not fit an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller broke a precondition (non-scalar loss, nondeterministic closure, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad input data: labels outside {0,1}, malformed CSV rows, empty classes.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN or Inf produced where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Image bytes that cannot be decoded.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace woundnet
