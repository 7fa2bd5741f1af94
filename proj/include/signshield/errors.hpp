#pragma once

#include <stdexcept>
#include <string>

namespace signshield {

// Base class for all recoverable toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor/image extents do not match what an operation requires.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Class index outside [0, class_count).
class LabelError : public Error {
public:
    using Error::Error;
};

// Invalid parameter value (fractions, qualities, counts, ...).
class ParamError : public Error {
public:
    using Error::Error;
};

// Dataset-level problems: empty sets, unknown class directories, splits.
class DataError : public Error {
public:
    using Error::Error;
};

// Malformed files (PPM, weight files, reports).
class FormatError : public Error {
public:
    using Error::Error;
};

// Filesystem write/read failures.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace signshield
