#pragma once

#include <stdexcept>
#include <string>

namespace denza {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Index or coordinate outside the valid range of a geometry.
class DomainError : public Error {
public:
    using Error::Error;
};

// Malformed input file (bad magic, mode, truncated payload).
class FormatError : public Error {
public:
    using Error::Error;
};

// Invalid user-supplied parameters; the CLI maps this to exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

class ConditioningError : public Error {
public:
    using Error::Error;
};

class SeedingError : public Error {
public:
    using Error::Error;
};

} // namespace denza
