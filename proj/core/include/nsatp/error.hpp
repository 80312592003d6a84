#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nsatp {

enum class ErrorCode {
  // probability vectors
  NegativeEntry,
  SumOutOfTolerance,
  TooShort,
  NonFinite,
  // ranking and selection
  DuplicateId,
  EmptyInput,
  KTooLarge,
  // datasets
  BadMagic,
  TruncatedFile,
  CountMismatch,
  LabelOutOfRange,
  RowLengthMismatch,
  NonNumericCell,
  Io,
  // oracles and models
  ShapeMismatch,
  DivergedLoss,
  MissingId,
  InvalidVector,
  Unsupported,
  ProcessSpawnFailure,
  ProtocolViolation,
  Timeout,
  CorruptFile,
  // attacks
  AnchorOutOfBounds,
  ImageTooSmall,
  InvalidParameter,
  // evaluation
  NonPositiveBaseline,
  TooFewPoints,
  DegenerateX,
  MissingMetric,
  LengthMismatch,
  // harness
  Config,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind rather than the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nsatp
