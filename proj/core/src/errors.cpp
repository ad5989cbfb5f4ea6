#include "regime/errors.hpp"

namespace regime {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NegativeOffDiagonal: return "NegativeOffDiagonal";
    case ErrorCode::NotConservative: return "NotConservative";
    case ErrorCode::NotIrreducible: return "NotIrreducible";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::StiffnessFailure: return "StiffnessFailure";
    case ErrorCode::NegativeMass: return "NegativeMass";
    case ErrorCode::NonPositiveValue: return "NonPositiveValue";
    case ErrorCode::WindowTooSmall: return "WindowTooSmall";
    case ErrorCode::ThetaOutOfRange: return "ThetaOutOfRange";
    case ErrorCode::WitnessNotPositive: return "WitnessNotPositive";
    case ErrorCode::NonPositiveRate: return "NonPositiveRate";
    case ErrorCode::EvaluationFailure: return "EvaluationFailure";
    case ErrorCode::ClockMismatch: return "ClockMismatch";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "UnknownError";
}

}  // namespace regime
