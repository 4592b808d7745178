#include "leakmap/error.hpp"

namespace leakmap {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::PointOnPartitionBoundary: return "PointOnPartitionBoundary";
    case ErrorCode::InvalidBeta: return "InvalidBeta";
    case ErrorCode::NotMarkovAligned: return "NotMarkovAligned";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MassExtinct: return "MassExtinct";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ZeroOperator: return "ZeroOperator";
    case ErrorCode::DegenerateGap: return "DegenerateGap";
    case ErrorCode::Reducible: return "Reducible";
    case ErrorCode::Periodic: return "Periodic";
    case ErrorCode::TailUnresolved: return "TailUnresolved";
    case ErrorCode::TruncationOverflow: return "TruncationOverflow";
    case ErrorCode::CoverageGap: return "CoverageGap";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace leakmap
