#pragma once

#include <stdexcept>
#include <string>

namespace ovc {

/// Shape or argument mismatch detectable before any numerics run.
class DimensionError : public std::invalid_argument {
public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Numerical breakdown: indefinite matrices after the jitter ladder,
/// non-finite objectives, diverging solves.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad experiment configuration (maps to CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ovc
