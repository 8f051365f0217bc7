// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace distill {

enum class ErrorCode {
    EmptyText,
    NoCriticalTokens,
    AlignmentGap,
    ShapeMismatch,
    UnsupportedModel,
    InvalidTemperature,
    DimensionMismatch,
    EmptyTarget,
    SequenceTooLong,
    ConfigInvalid,
    DataParseError,
    InvalidExample,
    IoError,
    DidNotConverge,
};

std::string_view to_string(ErrorCode code) noexcept;

class DistillError : public std::runtime_error {
public:
    DistillError(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace distill
