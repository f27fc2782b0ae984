#pragma once

#include <stdexcept>
#include <string>

namespace flowlens {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid caller-supplied configuration or argument values.
struct ParameterError : Error {
    using Error::Error;
};

// Grid geometry disagreement between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Malformed binary file (bad magic, truncation, out-of-domain values).
struct FormatError : Error {
    using Error::Error;
};

// Malformed text input; message carries the line number.
struct ParseError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Non-finite state or divergence inside a numeric routine.
struct NumericError : Error {
    using Error::Error;
};

// Rejection sampling or placement failure during synthesis.
struct GenerationError : Error {
    using Error::Error;
};

} // namespace flowlens
