#include "hdsafebo/errors.hpp"

namespace hdsafebo {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidInput: return "InvalidInput";
        case ErrorCode::NumericalFailure: return "NumericalFailure";
        case ErrorCode::SeedUnsafe: return "SeedUnsafe";
        case ErrorCode::DegenerateData: return "DegenerateData";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::InvalidMap: return "InvalidMap";
        case ErrorCode::Conflict: return "ConflictError";
        case ErrorCode::NotFound: return "NotFound";
    }
    return "Unknown";
}

}  // namespace hdsafebo
