#pragma once

#include <stdexcept>
#include <string>

namespace debias {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 1, DataError -> 2, NumericError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed configuration, bad usage, unreadable config files.
struct ConfigError : Error {
    using Error::Error;
};

// Invalid datasets: dimension mismatches, out-of-range ids, non-finite input.
struct DataError : Error {
    using Error::Error;
};

// Numerical breakdown at runtime: non-finite loss terms, divergence.
struct NumericError : Error {
    using Error::Error;
};

} // namespace debias
