#include "qme/common.hpp"

namespace qme {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoStabilizingSolution: return "NoStabilizingSolution";
    case ErrorCode::LyapunovSingular: return "LyapunovSingular";
    case ErrorCode::SdaNotConverged: return "SdaNotConverged";
    case ErrorCode::SingularPivot: return "SingularPivot";
    case ErrorCode::CrNotConverged: return "CrNotConverged";
    case ErrorCode::SplitViolation: return "SplitViolation";
    case ErrorCode::SingularEigenbasis: return "SingularEigenbasis";
    case ErrorCode::SingularOperator: return "SingularOperator";
    case ErrorCode::LeafNotSplittable: return "LeafNotSplittable";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::CompressedCareFailure: return "CompressedCareFailure";
    case ErrorCode::SingularShift: return "SingularShift";
    case ErrorCode::SingularCapacitance: return "SingularCapacitance";
    case ErrorCode::SingularCoefficient: return "SingularCoefficient";
    case ErrorCode::SingularShiftedOperator: return "SingularShiftedOperator";
    case ErrorCode::Breakdown: return "Breakdown";
    case ErrorCode::SingularMassMatrix: return "SingularMassMatrix";
    case ErrorCode::InvalidInput: return "InvalidInput";
  }
  return "Unknown";
}

bool is_structural(ErrorCode code) {
  switch (code) {
    case ErrorCode::MaxIterations:
    case ErrorCode::SdaNotConverged:
    case ErrorCode::CrNotConverged:
      return false;
    default:
      return true;
  }
}

Error::Error(ErrorCode code, const std::string& what, std::string path)
    : std::runtime_error(std::string(to_string(code)) + ": " + what +
                         (path.empty() ? std::string() : " [at " + path + "]")),
      code_(code),
      path_(std::move(path)) {}

Error Error::with_path(const std::string& path) const {
  // strip the previous prefix so the message does not nest
  std::string msg = what();
  const auto colon = msg.find(": ");
  if (colon != std::string::npos) msg = msg.substr(colon + 2);
  const auto at = msg.rfind(" [at ");
  if (at != std::string::npos) msg = msg.substr(0, at);
  return Error(code_, msg, path_.empty() ? path : path_);
}

}  // namespace qme
