#pragma once

#include <stdexcept>
#include <string>

namespace ildnet {

// Mismatched or malformed tensor/layer dimensions.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration values (rates, sizes, unknown names, bad keys).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Broken, inconsistent, or missing input data (files, stores, checkpoints,
// labels, malformed loss targets).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf where finite values are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ildnet
