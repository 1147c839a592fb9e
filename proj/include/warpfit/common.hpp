#pragma once

#include <stdexcept>
#include <string>

namespace warpfit {

inline constexpr const char* kVersion = "0.1.0";

// Closed interval [lo, hi], the common domain of all curves and warps.
struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    double length() const { return hi - lo; }
    bool contains(double t) const { return t >= lo && t <= hi; }
    bool contains_open(double t) const { return t > lo && t < hi; }
};

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Argument outside the domain of an operation (e.g. t outside the interval).
struct DomainError : Error {
    using Error::Error;
};

// Structural constraint violated (non-increasing knots, bad dimensions, ...).
struct ConstraintError : Error {
    using Error::Error;
};

// Invalid model parameter values (e.g. sigma^2 <= 0).
struct ParameterError : Error {
    using Error::Error;
};

// Complete separation detected in an unpenalized logistic fit.
struct SeparationError : Error {
    using Error::Error;
};

// File / format problems at the I/O boundary.
struct IoError : Error {
    using Error::Error;
};

// Irrecoverable numerical failure of a fitting procedure.
struct FitError : Error {
    using Error::Error;
};

}  // namespace warpfit
