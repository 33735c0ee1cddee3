#include "edc/error.hpp"

namespace edc {

std::string_view errc_name(Errc code) {
    switch (code) {
    case Errc::MarkerNotFound: return "MarkerNotFound";
    case Errc::EncodingError: return "EncodingError";
    case Errc::InsufficientTokens: return "InsufficientTokens";
    case Errc::BackendError: return "BackendError";
    case Errc::UnsupportedOperation: return "UnsupportedOperation";
    case Errc::ContextTooLong: return "ContextTooLong";
    case Errc::InvalidOrder: return "InvalidOrder";
    case Errc::InsufficientTraining: return "InsufficientTraining";
    case Errc::IOError: return "IOError";
    case Errc::ReplayCorrupt: return "ReplayCorrupt";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::InvalidDistribution: return "InvalidDistribution";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::JensenViolation: return "JensenViolation";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::EmptySeries: return "EmptySeries";
    case Errc::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

Error::Error(Errc code, std::string module, const std::string& message)
    : std::runtime_error(module + ": " + message),
      code_(code),
      module_(std::move(module)),
      message_(message) {}

Error Error::annotated(const std::string& context) const {
    return Error(code_, module_, context + ": " + message_);
}

void fail(Errc code, std::string module, const std::string& message) {
    throw Error(code, std::move(module), message);
}

} // namespace edc
