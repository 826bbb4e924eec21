#pragma once

#include <stdexcept>
#include <string>

namespace postnet {

// Bad file contents, schema mismatches, malformed datasets. CLI exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values escaping a computation (NaN loss and friends). CLI exit code 4.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Contract violations: bad shapes, invalid configs, misuse of an API.
class InvalidArgument : public std::runtime_error {
public:
    explicit InvalidArgument(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace postnet
