#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gsap {

enum class ErrorCode {
  kParse,
  kInvalidArgument,
  kQuestionUngrounded,
  kUnknownRelation,
  kDimensionMismatch,
  kEmptyGraph,
  kSequenceOverflow,
  kConflictingFlags,
  kNanLoss,
  kEmptyDataset,
  kIo,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "PARSE_ERROR";
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kQuestionUngrounded: return "QUESTION_UNGROUNDED";
    case ErrorCode::kUnknownRelation: return "UNKNOWN_RELATION";
    case ErrorCode::kDimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::kEmptyGraph: return "EMPTY_GRAPH";
    case ErrorCode::kSequenceOverflow: return "SEQUENCE_OVERFLOW";
    case ErrorCode::kConflictingFlags: return "CONFLICTING_FLAGS";
    case ErrorCode::kNanLoss: return "NAN_LOSS";
    case ErrorCode::kEmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::kIo: return "IO_ERROR";
  }
  return "UNKNOWN";
}

/// Exception carrying a machine-checkable code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gsap
