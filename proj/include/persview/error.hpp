#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace persview {

enum class ErrorCode {
  NonPositiveDepth,
  NonPositiveDistance,
  EyesBehindCamera,
  InvalidCamera,
  BadKernel,
  DegenerateDepth,
  EmptyMesh,
  DimensionMismatch,
  TooSmall,
  DegenerateLandmarks,
  DivergedFit,
  EmptyMask,
  ZeroVector,
  LengthMismatch,
  EmptyReport,
  MissingManifest,
  CorruptMember,
  MissingGenerated,
  IoFailure,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the engine. `member()` names the offending bundle
// member or input ("depth", "camera", ...) when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string member = {})
      : std::runtime_error(message), code_(code), member_(std::move(member)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& member() const noexcept { return member_; }

 private:
  ErrorCode code_;
  std::string member_;
};

}  // namespace persview
