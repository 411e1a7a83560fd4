#include "geoinpaint/error.hpp"

namespace geoinpaint {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionTooSmall: return "dimension too small";
    case ErrorCode::OutOfRange: return "out of range";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::LengthMismatch: return "length mismatch";
    case ErrorCode::ShapeMismatch: return "shape mismatch";
    case ErrorCode::GridMismatch: return "grid mismatch";
    case ErrorCode::SizeCapExceeded: return "allocation cap exceeded";
    case ErrorCode::NonpositiveConductivity: return "nonpositive conductivity";
    case ErrorCode::SingularSystem: return "singular system";
    case ErrorCode::NonConvergence: return "solver did not converge";
    case ErrorCode::ConvergenceFailure: return "eigensolver failed";
    case ErrorCode::Divergence: return "training diverged";
    case ErrorCode::InsufficientSamples: return "insufficient samples";
    case ErrorCode::ConstantTruth: return "constant truth field";
    case ErrorCode::EmptyMeasurements: return "empty measurement set";
    case ErrorCode::CountExceedsGrid: return "count exceeds grid";
    case ErrorCode::Config: return "config error";
    case ErrorCode::Io: return "i/o error";
  }
  return "unknown error";
}

ErrorClass classify(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularSystem:
    case ErrorCode::NonConvergence:
    case ErrorCode::ConvergenceFailure:
    case ErrorCode::Divergence:
    case ErrorCode::NonpositiveConductivity:
      return ErrorClass::Numerical;
    default:
      return ErrorClass::Config;
  }
}

}  // namespace geoinpaint
