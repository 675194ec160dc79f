#pragma once

#include <stdexcept>
#include <string>

namespace qsmf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad caller input: out-of-range index, invalid fraction, size mismatch.
struct ArgumentError : Error {
    using Error::Error;
};

// Malformed input file, unmapped label, bad row. Message names the row.
struct IngestError : Error {
    using Error::Error;
};

// Too few raters/notes/pairs to compute the requested statistic.
struct InsufficientDataError : Error {
    using Error::Error;
};

// NaN/Inf appeared in the training loss. Message names the epoch.
struct DivergenceError : Error {
    using Error::Error;
};

// Metric has no defined value (empty target set, zero variance, single class).
struct UndefinedMetricError : Error {
    using Error::Error;
};

// Model state that cannot be normalized or used (mean rho <= 0).
struct DegenerateModelError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace qsmf
