#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <string_view>

namespace calltide {

enum class ErrorKind {
    UnparsableDocument,
    DateNotFound,
    SourceUnavailable,
    UnknownTicker,
    RateLimited,
    NoQuoteNearby,
    InsufficientExamples,
    ConfigurationError,
    StoreCorrupt,
    ConstraintViolation,
    EmptyPredictionSet,
    PluginCrashed,
    PluginProtocolError,
    Timeout,
    EmptyEvaluation,
    OrderingError,
    IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Process exit code for the command-line front end.
/// 2 config, 3 ordering, 4 external source, 5 plugin, 1 anything else.
int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

template <ErrorKind K>
class KindError : public Error {
public:
    explicit KindError(const std::string& message) : Error(K, message) {}
};

using UnparsableDocument = KindError<ErrorKind::UnparsableDocument>;
using DateNotFound = KindError<ErrorKind::DateNotFound>;
using SourceUnavailable = KindError<ErrorKind::SourceUnavailable>;
using UnknownTicker = KindError<ErrorKind::UnknownTicker>;
using InsufficientExamples = KindError<ErrorKind::InsufficientExamples>;
using ConfigurationError = KindError<ErrorKind::ConfigurationError>;
using StoreCorrupt = KindError<ErrorKind::StoreCorrupt>;
using ConstraintViolation = KindError<ErrorKind::ConstraintViolation>;
using EmptyPredictionSet = KindError<ErrorKind::EmptyPredictionSet>;
using PluginCrashed = KindError<ErrorKind::PluginCrashed>;
using PluginTimeout = KindError<ErrorKind::Timeout>;
using EmptyEvaluation = KindError<ErrorKind::EmptyEvaluation>;
using OrderingError = KindError<ErrorKind::OrderingError>;
using IoError = KindError<ErrorKind::IoError>;

class RateLimited : public Error {
public:
    RateLimited(const std::string& message, std::chrono::seconds retry_after)
        : Error(ErrorKind::RateLimited, message), retry_after_(retry_after) {}

    std::chrono::seconds retry_after() const noexcept { return retry_after_; }

private:
    std::chrono::seconds retry_after_;
};

class NoQuoteNearby : public Error {
public:
    /// `offset` is the signed calendar-day offset that failed to resolve,
    /// or 0 when the lookup was not part of a window build.
    NoQuoteNearby(const std::string& message, int offset)
        : Error(ErrorKind::NoQuoteNearby, message), offset_(offset) {}

    int offset() const noexcept { return offset_; }

private:
    int offset_;
};

class PluginProtocolError : public Error {
public:
    PluginProtocolError(const std::string& message, std::string diagnostics = {})
        : Error(ErrorKind::PluginProtocolError, message), diagnostics_(std::move(diagnostics)) {}

    /// Whatever the plugin wrote to its standard error before failing.
    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

}  // namespace calltide
