#pragma once

#include <stdexcept>
#include <string>

namespace leakmap {

enum class ErrorCode {
  InvalidArgument,
  PointOnPartitionBoundary,
  InvalidBeta,
  NotMarkovAligned,
  DimensionMismatch,
  MassExtinct,
  NoConvergence,
  ZeroOperator,
  DegenerateGap,
  Reducible,
  Periodic,
  TailUnresolved,
  TruncationOverflow,
  CoverageGap,
  Config,
  Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace leakmap
