#pragma once

#include <stdexcept>
#include <string>

namespace hyperpoison {

/// Dimension or layout mismatch between operands.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A NaN/Inf appeared, or an iterative solver failed to converge.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (IDX, CIFAR, config).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or missing configuration value; the message names the key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hyperpoison
