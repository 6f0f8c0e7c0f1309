#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace switchlab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain of an operation (e.g. a segment time outside [-r, 0]).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Expression text that does not follow the grammar, or uses symbols of the wrong kind.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position)
        : Error(what + " at position " + std::to_string(position)), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Expression evaluation that would produce a non-finite value (division by zero, log of 0, ...).
class EvalError : public Error {
public:
    using Error::Error;
};

/// Model definition or kernel invariant violated (negative rate, missing parameter, ...).
class ModelError : public Error {
public:
    using Error::Error;
};

/// Invalid experiment configuration; `field` is a dotted path into the config.
class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : Error(field + ": " + what), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Numerical failure: non-convergence, singular system, explosion guard.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace switchlab
