#pragma once

#include <stdexcept>
#include <string>

namespace pdistill {

// Mirrors pd_status in the public C header; values must stay in sync.
enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kShapeMismatch = 2,
  kNonFinite = 3,
  kIo = 4,
  kCheckpointMagic = 5,
  kCheckpointVersion = 6,
  kCheckpointTruncated = 7,
  kCheckpointChecksum = 8,
  kCheckpointKind = 9,
  kClassifierUntrained = 10,
  kTrainingFailed = 11,
  kInternal = 99,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorCode::kInvalidArgument, what);
}

}  // namespace pdistill
