#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace plf {

enum class ErrorCode {
  MissingColumn,
  UnparseableRow,
  InvalidRecord,
  NonHourlyGap,
  DuplicateTimestamp,
  SpecOutOfRange,
  TooShort,
  SeriesTooShort,
  InvalidSpec,
  UnknownColumn,
  LengthMismatch,
  DuplicateColumn,
  EmptyMatrix,
  InvalidQuantile,
  InvalidConfig,
  UnknownConfigKey,
  SchemaMismatch,
  DegenerateTarget,
  LevelNotForecast,
  RangeOutOfSeries,
  Misaligned,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::UnparseableRow: return "UnparseableRow";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::NonHourlyGap: return "NonHourlyGap";
    case ErrorCode::DuplicateTimestamp: return "DuplicateTimestamp";
    case ErrorCode::SpecOutOfRange: return "SpecOutOfRange";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DuplicateColumn: return "DuplicateColumn";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::InvalidQuantile: return "InvalidQuantile";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownConfigKey: return "UnknownConfigKey";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::LevelNotForecast: return "LevelNotForecast";
    case ErrorCode::RangeOutOfSeries: return "RangeOutOfSeries";
    case ErrorCode::Misaligned: return "Misaligned";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace plf
