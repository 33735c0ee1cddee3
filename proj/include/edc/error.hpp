#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edc {

enum class Errc {
    MarkerNotFound,
    EncodingError,
    InsufficientTokens,
    BackendError,
    UnsupportedOperation,
    ContextTooLong,
    InvalidOrder,
    InsufficientTraining,
    IOError,
    ReplayCorrupt,
    ProtocolError,
    NonFiniteInput,
    InvalidDistribution,
    LengthMismatch,
    JensenViolation,
    OutOfRange,
    GridMismatch,
    EmptySeries,
    ConfigError,
};

std::string_view errc_name(Errc code);

/// Every failure raised by the library. what() is "<module>: <message>".
class Error : public std::runtime_error {
public:
    Error(Errc code, std::string module, const std::string& message);

    Errc code() const noexcept { return code_; }
    const std::string& module() const noexcept { return module_; }
    const std::string& message() const noexcept { return message_; }

    /// Same code and module, message prefixed with extra context.
    Error annotated(const std::string& context) const;

private:
    Errc code_;
    std::string module_;
    std::string message_;
};

[[noreturn]] void fail(Errc code, std::string module, const std::string& message);

} // namespace edc
