#include "rcmact/error.hpp"

namespace rcmact {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroAxis: return "ZeroAxis";
    case ErrorCode::DegenerateTriad: return "DegenerateTriad";
    case ErrorCode::ReflectionRequired: return "ReflectionRequired";
    case ErrorCode::AlreadyCalibrated: return "AlreadyCalibrated";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::UnreachableLayout: return "UnreachableLayout";
    case ErrorCode::ExpertFailure: return "ExpertFailure";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::UncalibratedEpisode: return "UncalibratedEpisode";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyBuffer: return "EmptyBuffer";
    case ErrorCode::EmptyTrajectory: return "EmptyTrajectory";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace rcmact
