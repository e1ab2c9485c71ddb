#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rcmact {

enum class ErrorCode {
  ZeroAxis,
  DegenerateTriad,
  ReflectionRequired,
  AlreadyCalibrated,
  InvalidConfig,
  BehindCamera,
  UnreachableLayout,
  ExpertFailure,
  FormatVersionMismatch,
  CorruptHeader,
  TruncatedPayload,
  EmptyDataset,
  UncalibratedEpisode,
  ShapeMismatch,
  NonFiniteLoss,
  EmptyBuffer,
  EmptyTrajectory,
  UnknownKey,
  TypeError,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every failure the library reports carries one of the codes above so callers
// (tests, the CLI exit-code mapping) can branch on the kind, not the text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rcmact
