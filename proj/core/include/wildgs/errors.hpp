#pragma once

#include <stdexcept>
#include <string>

namespace wildgs {

/// Caller broke a documented precondition (shape mismatch, bad argument).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced NaN/Inf. The message names the offending operation.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File missing, unreadable, malformed, or of the wrong version.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wildgs
