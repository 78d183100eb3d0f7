#pragma once

#include <stdexcept>
#include <string>

namespace emocomp {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed files, bad labels, inconsistent manifests. CLI exit code 2.
struct DataError : Error {
  using Error::Error;
};

/// Vector/matrix dimension mismatch between inputs.
struct DimensionError : DataError {
  using DataError::DataError;
};

/// Degenerate numeric input or diverging computation. CLI exit code 3.
struct NumericError : Error {
  using Error::Error;
};

/// Bad command-line usage. CLI exit code 1.
struct UsageError : Error {
  using Error::Error;
};

inline void require_same_dim(long a, long b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" +
                         std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

}  // namespace emocomp
