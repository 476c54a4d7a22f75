#pragma once

#include <stdexcept>
#include <string>

namespace trajmamba {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (files, trajectories, configs).
class DataError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced, divergence, or a violated numeric precondition.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Misuse of the API or CLI (bad flag combination, unknown mode, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace trajmamba
