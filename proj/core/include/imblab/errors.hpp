#pragma once

#include <stdexcept>
#include <string>

namespace imblab {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not conform for the requested operation.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid or inconsistent configuration (CLI exit code 2).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Missing/corrupt data files or degenerate datasets.
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Training blew up: non-finite loss/gradient or loss above the divergence
// limit. The trainer converts this into a diverged RunRecord.
struct DivergenceSignal : Error {
  explicit DivergenceSignal(const std::string& msg) : Error(msg) {}
};

}  // namespace imblab
