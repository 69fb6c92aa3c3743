#pragma once

#include <stdexcept>
#include <string>

namespace coopflux {

enum class ErrorCode {
    MissingGamma,
    NoCoexistence,
    NondefiniteA,
    NonPositiveArgument,
    NoPositiveRoot,
    HypothesisNotMet,
    InvalidArgument,
    GridMismatch,
    NegativeDensity,
    ConvergenceFailure,
    LinearSolveFailure,
    PositivityViolation,
    InsufficientData,
    NewtonDivergence,
    SingularJacobian,
    BranchLost,
    NotABifurcation,
    ConfigError,
    IoError,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can dispatch on it.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

}  // namespace coopflux
