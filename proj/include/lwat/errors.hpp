#ifndef LWAT_ERRORS_HPP
#define LWAT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lwat {

// Shape/extent disagreement between operands.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Cached perturbation no longer matches the incoming activation shape.
class StaleCacheError : public DimensionError {
public:
    explicit StaleCacheError(const std::string& msg) : DimensionError(msg) {}
};

// Malformed on-disk data (dataset files, tensors, checkpoints).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid caller-supplied value (out-of-range label, bad rate, ...).
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad experiment configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or failed numeric convergence; aborts training.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// A tape node references a primitive that is not registered.
class UnsupportedOpError : public std::runtime_error {
public:
    explicit UnsupportedOpError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures (missing paths, unwritable outputs).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace lwat

#endif // LWAT_ERRORS_HPP
