#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dualeval {

/// Broad failure class; the CLI maps each to its exit code.
enum class ErrorKind { config, backend, data };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Invalid symbol or empty sequence.
class SequenceError : public DataError {
public:
    using DataError::DataError;
};

/// Nucleotide length not a multiple of three.
class FrameError : public DataError {
public:
    using DataError::DataError;
};

/// A codon containing N.
class AmbiguityError : public DataError {
public:
    using DataError::DataError;
};

/// Mutation spec disagrees with the wild type it is applied to.
class ConsistencyError : public DataError {
public:
    ConsistencyError(std::size_t position, char expected, char found)
        : DataError("wild-type mismatch at position " + std::to_string(position) + ": expected " +
                    std::string(1, expected) + ", found " + std::string(1, found)),
          position_(position), expected_(expected), found_(found) {}

    std::size_t position() const noexcept { return position_; }
    char expected() const noexcept { return expected_; }
    char found() const noexcept { return found_; }

private:
    std::size_t position_;
    char expected_;
    char found_;
};

/// Correlation of a constant vector. Raised instead of returning 0.
class UndefinedCorrelation : public DataError {
public:
    using DataError::DataError;
};

class NonFiniteScore : public DataError {
public:
    explicit NonFiniteScore(std::size_t position)
        : DataError("non-finite log-probability at position " + std::to_string(position)),
          position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class DimensionMismatch : public DataError {
public:
    using DataError::DataError;
};

class BackendError : public Error {
public:
    BackendError(const std::string& what, bool retriable)
        : Error(ErrorKind::backend, what), retriable_(retriable) {}
    bool retriable() const noexcept { return retriable_; }

private:
    bool retriable_;
};

/// Request outside the backend's advertised capabilities. Never retried.
class CapabilityError : public BackendError {
public:
    explicit CapabilityError(const std::string& what) : BackendError(what, false) {}
};

/// Broken pipe, closed socket, unparsable reply.
class TransportError : public BackendError {
public:
    explicit TransportError(const std::string& what) : BackendError(what, true) {}
};

}  // namespace dualeval
