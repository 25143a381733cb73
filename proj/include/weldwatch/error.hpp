#pragma once

#include <stdexcept>
#include <string>

namespace weldwatch {

// Base for every error raised by the library. Subclasses name the failure
// category; the message carries the specifics (class name, line number, ...).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid hyperparameter, layer index, architecture or request knob.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Vector/matrix dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Bad data values: non-finite entries, empty sets, labels out of range.
class DataError : public Error {
public:
    using Error::Error;
};

// A per-class detector could not be fitted.
class FitError : public Error {
public:
    using Error::Error;
};

// Malformed CSV or configuration text.
class ParseError : public Error {
public:
    using Error::Error;
};

// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

// Persisted artifact failed validation on load.
class RestoreError : public Error {
public:
    using Error::Error;
};

// Client request referencing state that does not exist.
class RequestError : public Error {
public:
    using Error::Error;
};

// Mutation submitted against a revision that is no longer current.
class ConflictError : public Error {
public:
    using Error::Error;
};

}  // namespace weldwatch
