#include "smfvo/common.hpp"

namespace smfvo {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::PointBehindCamera: return "PointBehindCamera";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DegenerateSystem: return "DegenerateSystem";
    case ErrorCode::InsufficientObservations: return "InsufficientObservations";
    case ErrorCode::ImageSizeMismatch: return "ImageSizeMismatch";
    case ErrorCode::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ErrorCode::MissingCalibration: return "MissingCalibration";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::UnpairableStreams: return "UnpairableStreams";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace smfvo
