#pragma once

#include <stdexcept>
#include <string>

namespace fls {

/// Malformed model configuration, shape mismatch, or invalid argument.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while evaluating a model (missing or non-finite weights, bad input).
class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable, truncated or corrupt file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fls
