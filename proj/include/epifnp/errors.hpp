#pragma once

#include <stdexcept>
#include <string>

namespace epifnp {

// Caller broke an API precondition (shape mismatch, empty input, bad flag).
class ContractError : public std::invalid_argument {
public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// A computation left the finite-float domain (NaN/Inf) or diverged.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint / data file is unreadable, truncated or of the wrong version.
class CheckpointError : public std::runtime_error {
public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace epifnp
