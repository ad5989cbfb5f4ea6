#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace regime {

/// Failure categories raised by the library. Hypothesis violations of the
/// stability criteria are *not* errors: they come back as inapplicable
/// certificates (see certify.hpp). Error is reserved for bad inputs and
/// numerical breakdown.
enum class ErrorCode {
  // chain
  NegativeOffDiagonal,
  NotConservative,
  NotIrreducible,
  SingularSystem,
  // dynamics
  UnknownModel,
  InvalidParameter,
  NonFiniteState,
  // oracle
  StiffnessFailure,
  NegativeMass,
  NonPositiveValue,
  WindowTooSmall,
  // certify
  ThetaOutOfRange,
  WitnessNotPositive,
  NonPositiveRate,
  EvaluationFailure,
  ClockMismatch,
  // control
  Infeasible,
  // io / config
  IoFailure,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace regime
