#include "nsatp/error.hpp"

namespace nsatp {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::SumOutOfTolerance: return "SumOutOfTolerance";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::RowLengthMismatch: return "RowLengthMismatch";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::Io: return "Io";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::MissingId: return "MissingId";
    case ErrorCode::InvalidVector: return "InvalidVector";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::ProcessSpawnFailure: return "ProcessSpawnFailure";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::AnchorOutOfBounds: return "AnchorOutOfBounds";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::NonPositiveBaseline: return "NonPositiveBaseline";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::DegenerateX: return "DegenerateX";
    case ErrorCode::MissingMetric: return "MissingMetric";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace nsatp
