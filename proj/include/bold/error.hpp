#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bold {

enum class ErrorCode {
  InvalidInput,
  DegenerateInput,
  MissingGold,
  InconsistentArity,
  MissingTimestamps,
  NoRephraseProvider,
  IncompleteDecomposition,
  EmptyBudget,
  RequiresDistributions,
  NumericalFailure,
  SchemaError,
  IdMismatch,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::MissingGold: return "MissingGold";
    case ErrorCode::InconsistentArity: return "InconsistentArity";
    case ErrorCode::MissingTimestamps: return "MissingTimestamps";
    case ErrorCode::NoRephraseProvider: return "NoRephraseProvider";
    case ErrorCode::IncompleteDecomposition: return "IncompleteDecomposition";
    case ErrorCode::EmptyBudget: return "EmptyBudget";
    case ErrorCode::RequiresDistributions: return "RequiresDistributions";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Process exit codes: 0 success, 1 computation error, 2 input/validation error.
constexpr int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NumericalFailure:
    case ErrorCode::IoError:
      return 1;
    default:
      return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bold
