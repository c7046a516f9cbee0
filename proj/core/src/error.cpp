#include "twophase/error.hpp"

namespace twophase {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::InvalidRole: return "InvalidRole";
    case ErrorCode::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::ClusterSpansStrata: return "ClusterSpansStrata";
    case ErrorCode::RespondentNotSelected: return "RespondentNotSelected";
    case ErrorCode::MissingCovariate: return "MissingCovariate";
    case ErrorCode::MissingDesignValue: return "MissingDesignValue";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EmptyRecords: return "EmptyRecords";
    case ErrorCode::InvalidTable: return "InvalidTable";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TooManyDraws: return "TooManyDraws";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::TooFewObservations: return "TooFewObservations";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::SingleGroup: return "SingleGroup";
    case ErrorCode::TooManyLevels: return "TooManyLevels";
    case ErrorCode::ColumnMismatch: return "ColumnMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::Separation: return "Separation";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SingletonStratumCluster: return "SingletonStratumCluster";
    case ErrorCode::NonPositiveDf: return "NonPositiveDf";
    case ErrorCode::InvalidLevel: return "InvalidLevel";
    case ErrorCode::ChainTooShort: return "ChainTooShort";
    case ErrorCode::CovariateMismatch: return "CovariateMismatch";
    case ErrorCode::TooFewImputations: return "TooFewImputations";
    case ErrorCode::NoSuccessfulReplicates: return "NoSuccessfulReplicates";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::int64_t> subject)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code),
      subject_(subject) {}

}  // namespace twophase
