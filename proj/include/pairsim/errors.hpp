#pragma once

#include <stdexcept>
#include <string>

namespace pairsim {

// Malformed input data (CSV rows, table files, checkpoints). CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or degenerate numeric state. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or contract violation inside the library; a bug in calling code.
class ShapeError : public std::logic_error {
 public:
  explicit ShapeError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace pairsim
