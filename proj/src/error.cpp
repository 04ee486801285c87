#include "flowforge/error.hpp"

namespace flowforge {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingScale: return "MissingScale";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::BadBins: return "BadBins";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::BadScale: return "BadScale";
    case ErrorCode::BadPlan: return "BadPlan";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace flowforge
