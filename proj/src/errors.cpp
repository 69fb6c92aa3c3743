#include "coopflux/errors.hpp"

namespace coopflux {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MissingGamma: return "MissingGamma";
        case ErrorCode::NoCoexistence: return "NoCoexistence";
        case ErrorCode::NondefiniteA: return "NondefiniteA";
        case ErrorCode::NonPositiveArgument: return "NonPositiveArgument";
        case ErrorCode::NoPositiveRoot: return "NoPositiveRoot";
        case ErrorCode::HypothesisNotMet: return "HypothesisNotMet";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::GridMismatch: return "GridMismatch";
        case ErrorCode::NegativeDensity: return "NegativeDensity";
        case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
        case ErrorCode::LinearSolveFailure: return "LinearSolveFailure";
        case ErrorCode::PositivityViolation: return "PositivityViolation";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::NewtonDivergence: return "NewtonDivergence";
        case ErrorCode::SingularJacobian: return "SingularJacobian";
        case ErrorCode::BranchLost: return "BranchLost";
        case ErrorCode::NotABifurcation: return "NotABifurcation";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void raise(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace coopflux
