#pragma once

#include <stdexcept>
#include <string>

namespace dnetpad {

// Every failure raised by the library derives from Error so callers can
// catch one type and still dispatch on the category.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor or image dimensions that do not fit the operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Caller-supplied values outside an operation's domain.
class InputError : public Error {
public:
    using Error::Error;
};

// Invalid model, training or run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed files: bad magic, version mismatch, truncation.
class FormatError : public Error {
public:
    using Error::Error;
};

// NaN/Inf during training or a numeric search that did not converge.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace dnetpad
