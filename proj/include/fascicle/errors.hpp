#pragma once

#include <stdexcept>
#include <string>

namespace fasc {

// Invalid user input: bad config values, missing files, violated preconditions.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Geometry that cannot support the requested solve (disconnected subdomain,
// degenerate Ranvier surface, compatibility violation).
struct GeometryError : std::runtime_error {
  explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

// Solver breakdown: non-convergence, indefiniteness, NaN state.
struct NumericalError : std::runtime_error {
  NumericalError(const std::string& msg, double residual = 0.0)
      : std::runtime_error(msg), residual(residual) {}
  double residual;
};

}  // namespace fasc
