#pragma once

#include <stdexcept>
#include <string>

namespace conqar {

// Shape disagreement between operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Invalid hyperparameter, option or argument value.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input file content does not follow the expected layout.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf produced, or a non-deterministic function handed to the gradient checker.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace conqar
