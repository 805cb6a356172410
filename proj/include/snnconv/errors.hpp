#pragma once

#include <stdexcept>

namespace snnconv {

/// Invalid or inconsistent run configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A stage's input artifact is missing or does not match its manifest (exit code 3).
struct StageOrderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training diverged or a numeric invariant broke (exit code 4).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// No exponent makes the layer representable within the chip limits.
struct QuantizationError : NumericalError {
    using NumericalError::NumericalError;
};

} // namespace snnconv
