#include "subdyn/common.hpp"

namespace subdyn {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateElement: return "DegenerateElement";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::ZeroLengthEdge: return "ZeroLengthEdge";
    case ErrorCode::AntiparallelEdges: return "AntiparallelEdges";
    case ErrorCode::DegenerateTriangle: return "DegenerateTriangle";
    case ErrorCode::DegenerateHinge: return "DegenerateHinge";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::MissingBcValues: return "MissingBcValues";
    case ErrorCode::LinearSolveFailure: return "LinearSolveFailure";
    case ErrorCode::NonFiniteLatent: return "NonFiniteLatent";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UnknownScenario: return "UnknownScenario";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

std::string version_string() {
#ifdef SUBDYN_VERSION
  return SUBDYN_VERSION;
#else
  return "0.0.0";
#endif
}

}  // namespace subdyn
