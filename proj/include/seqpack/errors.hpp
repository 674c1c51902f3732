#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace seqpack {

enum class ErrorKind {
    EmptyConversation,
    RoleAlternationViolation,
    EmptyContent,
    SystemMessage,
    UnknownRole,
    MalformedRecord,
    InvalidTemplate,
    TokenizerFailure,
    LengthMismatch,
    MissingFinalEos,
    UnknownLabel,
    InvalidToken,
    IoFailure,
    BadMagic,
    VersionMismatch,
    InputNotFound,
    ParseError,
    ConfigConflict,
    InvalidArgument,
};

inline std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::EmptyConversation: return "EmptyConversation";
    case ErrorKind::RoleAlternationViolation: return "RoleAlternationViolation";
    case ErrorKind::EmptyContent: return "EmptyContent";
    case ErrorKind::SystemMessage: return "SystemMessage";
    case ErrorKind::UnknownRole: return "UnknownRole";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::InvalidTemplate: return "InvalidTemplate";
    case ErrorKind::TokenizerFailure: return "TokenizerFailure";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::MissingFinalEos: return "MissingFinalEos";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::InvalidToken: return "InvalidToken";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::InputNotFound: return "InputNotFound";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConfigConflict: return "ConfigConflict";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Single exception type for the library. `index()` carries the offending
/// message or token index when there is one.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::optional<std::size_t> index = std::nullopt)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), index_(index)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }
    std::optional<std::size_t> index() const noexcept { return index_; }

private:
    ErrorKind kind_;
    std::optional<std::size_t> index_;
};

} // namespace seqpack
