#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mupm {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kNonFiniteOutput,
  kUnsupportedKind,
  kReplayMiss,
  kHttpFailure,
  kIoFailure,
  kParseFailure,
  kDuplicateKey,
  kInconsistentK,
  kInvalidSpec,
  kEmptyAfterSubset,
  kTooFewReplicates,
  kEmptyInput,
  kDegenerateDesign,
  kTooFewObservations,
  kReductionMismatch,
  kConstantBenchmark,
  kLengthMismatch,
  kNegativeInput,
  kTooFewSamples,
  kDegenerateGroups,
  kNonFiniteDifference,
  kMissingArtifact,
  kConfig,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonFiniteOutput: return "NonFiniteOutput";
    case ErrorCode::kUnsupportedKind: return "UnsupportedKind";
    case ErrorCode::kReplayMiss: return "ReplayMiss";
    case ErrorCode::kHttpFailure: return "HttpFailure";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kParseFailure: return "ParseFailure";
    case ErrorCode::kDuplicateKey: return "DuplicateKey";
    case ErrorCode::kInconsistentK: return "InconsistentK";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kEmptyAfterSubset: return "EmptyAfterSubset";
    case ErrorCode::kTooFewReplicates: return "TooFewReplicates";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kDegenerateDesign: return "DegenerateDesign";
    case ErrorCode::kTooFewObservations: return "TooFewObservations";
    case ErrorCode::kReductionMismatch: return "ReductionMismatch";
    case ErrorCode::kConstantBenchmark: return "ConstantBenchmark";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kNegativeInput: return "NegativeInput";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kDegenerateGroups: return "DegenerateGroups";
    case ErrorCode::kNonFiniteDifference: return "NonFiniteDifference";
    case ErrorCode::kMissingArtifact: return "MissingArtifact";
    case ErrorCode::kConfig: return "Config";
  }
  return "Unknown";
}

// All library failures surface as this exception; code() is the stable part.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace mupm
