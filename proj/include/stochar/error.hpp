#pragma once

#include <stdexcept>
#include <string>

namespace stochar {

// Base for every error raised by the library. The CLI maps subclasses to
// exit codes: usage/spec problems -> 2, estimation failures -> 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& where, const std::string& what)
        : Error(where.empty() ? what : where + ": " + what), location_(where) {}

    const std::string& location() const noexcept { return location_; }

private:
    std::string location_;
};

// Invalid argument / precondition violation.
class UsageError : public Error {
public:
    using Error::Error;
};

// Symbolic operation requested on a non-polynomial (built-in) coefficient.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

// An estimator could not produce a value, e.g. every path was censored.
class EstimationError : public Error {
public:
    EstimationError(const std::string& what, double censored_fraction)
        : Error(what), censored_fraction_(censored_fraction) {}

    double censored_fraction() const noexcept { return censored_fraction_; }

private:
    double censored_fraction_;
};

// A hypothesis checked numerically before a construction does not hold.
class ConditionError : public Error {
public:
    ConditionError(const std::string& what, double value) : Error(what), value_(value) {}

    double value() const noexcept { return value_; }

private:
    double value_;
};

} // namespace stochar
