#pragma once

#include <stdexcept>
#include <string>

namespace mome {

// Base class for all library errors. CLI maps these to exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/dimension mismatch between tensors.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid configuration value (K out of range, even MA kernel, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Input data unusable (too short, empty text, undefined label, ...).
struct DataError : Error {
  using Error::Error;
};

// File / serialization problems.
struct IoError : Error {
  using Error::Error;
};

// Lookup of a known-format record failed.
struct NotFoundError : Error {
  using Error::Error;
};

// Training aborted (non-finite loss); message carries step/batch context.
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace mome
