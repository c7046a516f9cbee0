#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace twophase {

enum class ErrorCode {
  // dataset
  SchemaMismatch,
  ParseError,
  EmptyFile,
  InvalidRole,
  NonPositiveWeight,
  ClusterSpansStrata,
  RespondentNotSelected,
  MissingCovariate,
  MissingDesignValue,
  IoError,
  EmptyRecords,
  InvalidTable,
  // popgen / sampling
  InvalidConfig,
  TooManyDraws,
  InvalidProbability,
  // bart
  NonFiniteInput,
  TooFewObservations,
  SingleClass,
  SingleGroup,
  TooManyLevels,
  ColumnMismatch,
  IndexOutOfRange,
  // propensity
  Separation,
  SingularDesign,
  NonPositiveInput,
  // estimators
  EmptyInput,
  SingletonStratumCluster,
  NonPositiveDf,
  InvalidLevel,
  // mi
  ChainTooShort,
  CovariateMismatch,
  TooFewImputations,
  // simharness
  NoSuccessfulReplicates,
};

std::string_view error_code_name(ErrorCode code);

/// Exception carrying a machine-checkable code and, where one exists, the
/// offending row (1-based data row) or cluster id.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::int64_t> subject = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::int64_t> subject() const noexcept { return subject_; }

 private:
  ErrorCode code_;
  std::optional<std::int64_t> subject_;
};

}  // namespace twophase
