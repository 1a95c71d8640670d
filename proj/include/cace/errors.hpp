#pragma once

#include <stdexcept>
#include <string>

namespace cace {

// Malformed input: bad CSV cell, unknown covariate, inconsistent design.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A parameter has no informative observations (empty compliance cell,
// no discordant subjects in a pattern).
class IdentificationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Linear system singular to working precision.
class SingularMatrixError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cace
