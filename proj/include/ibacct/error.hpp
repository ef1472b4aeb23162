#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ibacct {

/// Input violates a type invariant or an operation precondition.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed fixture or trace file. Carries the 1-based line number (0 if unknown).
class ParseError : public ValidationError {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A carbon-intensity lookup fell outside the series coverage.
class MissingIntensity : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

namespace detail {

inline void require(bool cond, const char* msg) {
    if (!cond) {
        throw ValidationError(msg);
    }
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw ValidationError(msg);
    }
}

}  // namespace detail
}  // namespace ibacct
