#pragma once

#include <stdexcept>
#include <string>

namespace greenup {

// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible or invalid tensor shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A caller violated an operation precondition (wrong variant, non-scalar loss, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

// Bad user-supplied values: configs, records, file contents.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed dataset file; message carries file and line.
class LoadError : public ValidationError {
public:
    LoadError(const std::string& file, std::size_t line, const std::string& what)
        : ValidationError(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}

    const std::string& file() const { return file_; }
    std::size_t line() const { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

class CheckpointError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Raised when a sample lacks the image an image model needs.
class MissingImageError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Filesystem failures (missing files, unwritable paths).
class IoError : public Error {
public:
    using Error::Error;
};

// The finite-difference oracle could not produce a trustworthy answer.
class OracleError : public Error {
public:
    using Error::Error;
};

}  // namespace greenup
