#include "calltide/errors.hpp"

namespace calltide {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::UnparsableDocument: return "UnparsableDocument";
        case ErrorKind::DateNotFound: return "DateNotFound";
        case ErrorKind::SourceUnavailable: return "SourceUnavailable";
        case ErrorKind::UnknownTicker: return "UnknownTicker";
        case ErrorKind::RateLimited: return "RateLimited";
        case ErrorKind::NoQuoteNearby: return "NoQuoteNearby";
        case ErrorKind::InsufficientExamples: return "InsufficientExamples";
        case ErrorKind::ConfigurationError: return "ConfigurationError";
        case ErrorKind::StoreCorrupt: return "StoreCorrupt";
        case ErrorKind::ConstraintViolation: return "ConstraintViolation";
        case ErrorKind::EmptyPredictionSet: return "EmptyPredictionSet";
        case ErrorKind::PluginCrashed: return "PluginCrashed";
        case ErrorKind::PluginProtocolError: return "PluginProtocolError";
        case ErrorKind::Timeout: return "Timeout";
        case ErrorKind::EmptyEvaluation: return "EmptyEvaluation";
        case ErrorKind::OrderingError: return "OrderingError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::ConfigurationError:
        case ErrorKind::InsufficientExamples:
            return 2;
        case ErrorKind::OrderingError:
            return 3;
        case ErrorKind::SourceUnavailable:
        case ErrorKind::UnknownTicker:
        case ErrorKind::RateLimited:
            return 4;
        case ErrorKind::PluginCrashed:
        case ErrorKind::PluginProtocolError:
        case ErrorKind::Timeout:
            return 5;
        default:
            return 1;
    }
}

}  // namespace calltide
