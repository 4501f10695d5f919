#pragma once

#include <stdexcept>
#include <string>

namespace ddn {

// Shape/width disagreements between tensors or layers.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller broke an API contract (non-scalar loss, missing grad, ...).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid run configuration (out-of-range value, infeasible grid, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ddn
