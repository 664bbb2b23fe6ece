#pragma once

#include <stdexcept>
#include <string>

namespace redtest {

// Every recoverable failure the library reports. The CLI maps these to
// exit code 1; malformed usage is handled separately by the CLI parser.
enum class ErrorCode {
    // tensor files
    BadMagic,
    UnsupportedLayout,
    Truncated,
    NonFinite,
    IoFailure,
    EmptyTensor,
    ManifestMismatch,
    BadSpec,
    // similarity kernel
    OrderMismatch,
    TooFewSamples,
    DegenerateRepresentation,
    // scoring / planning
    UnknownProfile,
    RankDeficient,
    TooFewLayers,
    MissingCost,
    NonPositiveBase,
    MissingField,
    EmptyCandidateSet,
};

inline const char *error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::UnsupportedLayout: return "UnsupportedLayout";
        case ErrorCode::Truncated: return "Truncated";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::EmptyTensor: return "EmptyTensor";
        case ErrorCode::ManifestMismatch: return "ManifestMismatch";
        case ErrorCode::BadSpec: return "BadSpec";
        case ErrorCode::OrderMismatch: return "OrderMismatch";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::DegenerateRepresentation: return "DegenerateRepresentation";
        case ErrorCode::UnknownProfile: return "UnknownProfile";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::TooFewLayers: return "TooFewLayers";
        case ErrorCode::MissingCost: return "MissingCost";
        case ErrorCode::NonPositiveBase: return "NonPositiveBase";
        case ErrorCode::MissingField: return "MissingField";
        case ErrorCode::EmptyCandidateSet: return "EmptyCandidateSet";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace redtest
