#pragma once

#include <stdexcept>
#include <string>

namespace seqdiff {

// Base for everything the library throws; the CLI maps subclasses to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or arity violations.
struct ShapeError : Error {
    using Error::Error;
};

// Domain violations: NaN/Inf values, out-of-range arguments, degenerate inputs.
struct ValueError : Error {
    using Error::Error;
};

// Malformed file contents (dataset lines, config entries, checkpoint bytes).
struct ParseError : Error {
    using Error::Error;
};

// Filesystem failures: missing paths, unreadable/unwritable files.
struct IoError : Error {
    using Error::Error;
};

// Numeric failure at runtime: diverging loss, singular covariance.
struct NumericError : Error {
    using Error::Error;
};

// Mismatch between artifacts: checkpoint vs. flags, extractor vs. data dims.
struct CompatError : Error {
    using Error::Error;
};

// Bad command invocation beyond what flag parsing catches.
struct UsageError : Error {
    using Error::Error;
};

// Exit-code contract used by the CLI.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 2;
inline constexpr int io = 3;
inline constexpr int numeric = 4;
inline constexpr int compat = 5;
} // namespace exit_code

} // namespace seqdiff
