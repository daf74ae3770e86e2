#pragma once

#include <stdexcept>
#include <string>

namespace fdmlab {

// Error taxonomy mirrors the CLI exit codes: 2 argument, 3 data, 4 numeric.
struct ArgError : std::runtime_error {
  explicit ArgError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fdmlab
