#pragma once

#include <stdexcept>
#include <string>

namespace manifold_ot {

/// Raised when a caller breaks a documented precondition (shape, manifold tag, range).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid user configuration: distribution parameters, config files, CLI values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training or filtering produced a non-finite quantity.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace manifold_ot
