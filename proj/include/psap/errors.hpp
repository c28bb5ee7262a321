// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace psap {

/// Shape or channel-count mismatch between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf appeared where a finite value is required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (missing cache, stale backup, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid or unsupported configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File missing, unreadable or truncated.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File readable but its content violates the expected format.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace psap
