#pragma once

#include <stdexcept>
#include <string>

namespace rnet {

/// Violated numeric precondition: dimension mismatch, bad stride, kernel larger than input.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A NetworkSpec that fails validation or shape inference.
class SpecError : public std::runtime_error {
public:
    SpecError(std::size_t layer_index, const std::string& what)
        : std::runtime_error("layer " + std::to_string(layer_index) + ": " + what),
          layer_index_(layer_index) {}

    std::size_t layer_index() const noexcept { return layer_index_; }

private:
    std::size_t layer_index_;
};

/// Non-finite loss or otherwise diverged optimisation.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input data (images, dataset trees, reports).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor container / weight file failures. Each has its own type so callers
// can tell a stale file from a corrupt one.
class FormatError : public DataError {
public:
    using DataError::DataError;
};
class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};
class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};
class ShapeError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace rnet
