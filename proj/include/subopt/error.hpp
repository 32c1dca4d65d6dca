#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace subopt {

enum class ErrorCode {
    InvalidArgument,
    DimensionMismatch,
    NotPositiveDefinite,
    EmptyInput,
    DegenerateDesign,
    DegenerateOutcome,
    InfeasibleBudget,
    AllZeroNorms,
    NegativeRadicand,
    BudgetBelowStratumCount,
    EnumerationTooLarge,
    ParseError,
    MissingOutcomeColumns,
    NonBinaryOutcome,
    SolverFailure,
    EmptyCell,
    NoData,
    IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateDesign: return "DegenerateDesign";
    case ErrorCode::DegenerateOutcome: return "DegenerateOutcome";
    case ErrorCode::InfeasibleBudget: return "InfeasibleBudget";
    case ErrorCode::AllZeroNorms: return "AllZeroNorms";
    case ErrorCode::NegativeRadicand: return "NegativeRadicand";
    case ErrorCode::BudgetBelowStratumCount: return "BudgetBelowStratumCount";
    case ErrorCode::EnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingOutcomeColumns: return "MissingOutcomeColumns";
    case ErrorCode::NonBinaryOutcome: return "NonBinaryOutcome";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::EmptyCell: return "EmptyCell";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Library-wide exception. Every failure raised by subopt carries a code so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace subopt
