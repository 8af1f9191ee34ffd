#pragma once

#include <stdexcept>
#include <string>

namespace maskcycle {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes (see exit_code_for).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error { using Error::Error; };
class DecodeError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class PreconditionError : public Error { using Error::Error; };
class BoundsError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class ChecksumError : public Error { using Error::Error; };
class NotFoundError : public Error { using Error::Error; };
class EmptyAnnotationError : public Error { using Error::Error; };
class EmptyExportError : public DataError { using DataError::DataError; };
class BindError : public Error { using Error::Error; };

// A stage cannot start because an earlier stage's artifact is missing.
class PrerequisiteError : public DataError { using DataError::DataError; };

} // namespace maskcycle
