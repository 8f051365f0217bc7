// SPDX-License-Identifier: Apache-2.0
#include "distill/errors.hpp"

namespace distill {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EmptyText: return "EmptyText";
        case ErrorCode::NoCriticalTokens: return "NoCriticalTokens";
        case ErrorCode::AlignmentGap: return "AlignmentGap";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::UnsupportedModel: return "UnsupportedModel";
        case ErrorCode::InvalidTemperature: return "InvalidTemperature";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyTarget: return "EmptyTarget";
        case ErrorCode::SequenceTooLong: return "SequenceTooLong";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::DataParseError: return "DataParseError";
        case ErrorCode::InvalidExample: return "InvalidExample";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::DidNotConverge: return "DidNotConverge";
    }
    return "Unknown";
}

}  // namespace distill
