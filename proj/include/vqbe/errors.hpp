#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vqbe {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. `line` is 1-based for file input, `position` is a
/// 0-based character offset for query text; either may be 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t line, std::size_t position)
        : Error(msg), line_(line), position_(position) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t line_;
    std::size_t position_;
};

/// A loaded dataset violates a scene-model invariant.
class IntegrityError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

/// A predicate constant outside its domain, or an unknown predicate.
class DomainError : public Error {
public:
    using Error::Error;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

class UnsupportedError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

/// A label source failed (unknown vid, timeout, closed transport).
class OracleError : public Error {
public:
    using Error::Error;
};

}  // namespace vqbe
