#pragma once

#include <stdexcept>
#include <string>

namespace scd {

/// Bad user input: unknown flag values, malformed config, invalid ranges.
/// Maps to process exit code 1.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Broken or missing data: malformed trace lines, missing files,
/// schema violations. Maps to process exit code 2.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure: diverged training, non-finite intermediates,
/// arithmetic overflow in a subject run. Maps to process exit code 3.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace exit_code {
constexpr int ok = 0;
constexpr int usage = 1;
constexpr int data = 2;
constexpr int numeric = 3;
}  // namespace exit_code

}  // namespace scd
