#pragma once

#include <stdexcept>

namespace cbo {

// Caller passed arguments or a configuration that violates a precondition.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Input data produced values the algorithms cannot digest (e.g. a non-finite
// objective value at a particle position).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A simulation step produced non-finite state.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace cbo
