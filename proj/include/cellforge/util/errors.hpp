#pragma once

#include <stdexcept>
#include <string>

namespace cellforge {

// Exit-code mapping used by the CLI: validation -> 1, I/O -> 2, numerical -> 3.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Misuse of a stateful API (e.g. backward on a value that was never traced).
class StateError : public std::logic_error {
public:
    explicit StateError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace cellforge
