#pragma once

#include <stdexcept>
#include <string>

namespace ikl {

// Shape disagreement between operands (matrix dims, layer sizes, ...).
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Feature maps built from different frequency batches were combined.
struct ProvenanceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Well-formed input violating a domain constraint (labels, counts, ...).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad experiment configuration (unknown key, missing field, invalid value).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ikl
