#pragma once

#include <stdexcept>
#include <string>

namespace evqa {

// Shape/dimension mismatch between tensors or sequences.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf encountered, domain violation (log of non-positive), zero-norm
// vector in a cosine, and similar numeric failures.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularMatrixError : NumericError {
    using NumericError::NumericError;
};

// API misuse: backward on a non-scalar, step before backward, overlapping
// event partitions, non-deterministic function under grad check.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value (negative lambda, tau <= 0, bad proportions).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset parse or invariant failure.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace evqa
